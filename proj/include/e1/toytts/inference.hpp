#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "e1/core/error.hpp"
#include "e1/core/rng.hpp"
#include "e1/dmd/generator.hpp"
#include "e1/flow/rectified_flow.hpp"
#include "e1/oracle/dtw.hpp"
#include "e1/toytts/duration.hpp"
#include "e1/toytts/t2t_model.hpp"
#include "e1/toytts/task.hpp"

namespace e1::toytts {

/// Maps noise for the masked rows of a batch to generated tokens.
using Sampler = std::function<RealArray(const RealArray&, const InfillBatch&)>;

inline Sampler euler_sampler(const flow::DriftModel& model, const nn::ParamStore& params, std::size_t steps,
                             flow::FlowSchedule schedule = {}) {
    return [&model, &params, steps, schedule](const RealArray& z, const InfillBatch& batch) {
        return flow::euler_sample(flow::drift_fn(model, params), z, steps, &batch, schedule);
    };
}

inline Sampler one_step_sampler(const dmd::Generator& generator, const nn::ParamStore& params) {
    return [&generator, &params](const RealArray& z, const InfillBatch& batch) { return generator.sample(params, z, &batch); };
}

/// Fills the mask of every item. Item i uses noise from stream seeds[i], so
/// the result does not depend on how items are grouped into chunks.
inline std::vector<RealArray> run_infill(const Sampler& sampler, const std::vector<InfillItem>& items,
                                         const std::vector<std::uint64_t>& seeds, std::size_t chunk = 64) {
    if (seeds.size() != items.size()) throw ShapeError("run_infill: one seed per item required");
    if (chunk == 0) throw DomainError("run_infill: chunk must be positive");
    std::vector<RealArray> out;
    out.reserve(items.size());
    for (std::size_t lo = 0; lo < items.size(); lo += chunk) {
        const std::size_t hi = std::min(items.size(), lo + chunk);
        InfillBatch batch(std::vector<InfillItem>(items.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  items.begin() + static_cast<std::ptrdiff_t>(hi)));
        const std::size_t d = items[lo].context.cols();
        RealArray z = RealArray::matrix(batch.free_rows(), d);
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng(seeds[i]);
            const RealArray zi = rng.normal_array({items[i].mask.length, d});
            std::copy(zi.data(), zi.data() + zi.size(), z.row(batch.free_offset(i - lo)).begin());
        }
        for (auto& tokens : batch.assemble(sampler(z, batch))) out.push_back(std::move(tokens));
    }
    return out;
}

/// Whole-sequence generation for text with a given total length.
inline InfillItem synthesis_item(const std::vector<std::size_t>& text, std::size_t total_duration, std::size_t token_dim) {
    if (total_duration == 0) throw DomainError("synthesize: total_duration must be at least 1");
    return {text, RealArray::matrix(total_duration, token_dim), MaskSpec::full(total_duration)};
}

inline RealArray synthesize(const Sampler& sampler, const std::vector<std::size_t>& text, std::size_t total_duration,
                            std::size_t token_dim, std::uint64_t seed) {
    return run_infill(sampler, {synthesis_item(text, total_duration, token_dim)}, {seed}).front();
}

inline std::vector<RealArray> synthesize_many(const Sampler& sampler, const std::vector<std::vector<std::size_t>>& texts,
                                              const std::vector<std::size_t>& totals, std::size_t token_dim,
                                              const std::vector<std::uint64_t>& seeds) {
    if (texts.size() != totals.size()) throw ShapeError("synthesize_many: one total per text required");
    std::vector<InfillItem> items;
    for (std::size_t i = 0; i < texts.size(); ++i) items.push_back(synthesis_item(texts[i], totals[i], token_dim));
    return run_infill(sampler, items, seeds);
}

/// Per-item seeds derived from one base seed.
inline std::vector<std::uint64_t> item_seeds(std::uint64_t base, std::size_t n) {
    std::vector<std::uint64_t> out;
    const Rng root(base);
    for (std::size_t i = 0; i < n; ++i) out.push_back(root.split(i).next_u64());
    return out;
}

// ---------------------------------------------------------------------------
// Inpainting

struct SymbolSpan {
    std::size_t start = 0;
    std::size_t length = 0;
};

/// Middle third of an n-symbol text.
inline SymbolSpan middle_third(std::size_t n) { return {n / 3, n - 2 * (n / 3)}; }

struct InpaintPlan {
    std::vector<std::size_t> text;  // edited text
    RealArray context;              // prefix tokens, placeholder middle, suffix tokens
    std::size_t prefix_rows = 0;
    std::size_t middle_rows = 0;
    std::size_t suffix_rows = 0;

    bool needs_generation() const { return middle_rows > 0; }
    InfillItem item() const { return {text, context, MaskSpec::middle(prefix_rows, middle_rows)}; }
};

/// Durations of unedited symbols come from the utterance's alignment. The
/// edited symbols get `middle_override` tokens if given, else the duration
/// model's estimate of their total (rounded, at least one per symbol).
inline InpaintPlan plan_inpaint(const ToyUtterance& u, SymbolSpan span, const std::vector<std::size_t>& new_text,
                                const DurationModel* durations, const nn::ParamStore* duration_params,
                                std::optional<std::size_t> middle_override = std::nullopt) {
    if (span.start + span.length > u.text.size()) throw DomainError("inpaint: edit region outside the text");
    InpaintPlan plan;
    std::size_t prefix_rows = 0, span_rows = 0;
    for (std::size_t s = 0; s < span.start; ++s) prefix_rows += u.durations[s];
    for (std::size_t s = span.start; s < span.start + span.length; ++s) span_rows += u.durations[s];
    plan.prefix_rows = prefix_rows;
    plan.suffix_rows = u.n_speech() - prefix_rows - span_rows;

    plan.text.assign(u.text.begin(), u.text.begin() + static_cast<std::ptrdiff_t>(span.start));
    plan.text.insert(plan.text.end(), new_text.begin(), new_text.end());
    plan.text.insert(plan.text.end(), u.text.begin() + static_cast<std::ptrdiff_t>(span.start + span.length), u.text.end());
    if (plan.text.empty()) throw DomainError("inpaint: edit leaves an empty text");

    if (new_text.empty()) {
        plan.middle_rows = 0;
    } else if (middle_override) {
        plan.middle_rows = std::max(*middle_override, new_text.size());
    } else {
        if (!durations || !duration_params) throw DomainError("inpaint: a duration model is required to size the edit");
        DurationQuery q{plan.text, std::vector<std::size_t>(plan.text.size(), 0), std::vector<bool>(plan.text.size(), true)};
        for (std::size_t s = 0; s < span.start; ++s) q.durations[s] = u.durations[s];
        const std::size_t tail = span.start + new_text.size();
        for (std::size_t s = tail; s < plan.text.size(); ++s) q.durations[s] = u.durations[s - tail + span.start + span.length];
        for (std::size_t s = span.start; s < tail; ++s) q.observed[s] = false;
        const auto est = durations->predict(*duration_params, q);
        double total = 0.0;
        for (std::size_t s = span.start; s < tail; ++s) total += est[s];
        plan.middle_rows = round_duration(total, new_text.size());
    }

    const std::size_t d = u.tokens.cols();
    plan.context = RealArray::matrix(plan.prefix_rows + plan.middle_rows + plan.suffix_rows, d);
    std::copy(u.tokens.data(), u.tokens.data() + plan.prefix_rows * d, plan.context.data());
    std::copy(u.tokens.data() + (prefix_rows + span_rows) * d, u.tokens.data() + u.tokens.size(),
              plan.context.data() + (plan.prefix_rows + plan.middle_rows) * d);
    return plan;
}

/// Runs every plan; plans without new tokens return their context as is.
inline std::vector<RealArray> inpaint_many(const Sampler& sampler, const std::vector<InpaintPlan>& plans,
                                           const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() != plans.size()) throw ShapeError("inpaint_many: one seed per plan required");
    std::vector<InfillItem> items;
    std::vector<std::uint64_t> item_seed;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        if (!plans[i].needs_generation()) continue;
        items.push_back(plans[i].item());
        item_seed.push_back(seeds[i]);
    }
    auto generated = items.empty() ? std::vector<RealArray>{} : run_infill(sampler, items, item_seed);
    std::vector<RealArray> out;
    std::size_t g = 0;
    for (const auto& p : plans) out.push_back(p.needs_generation() ? std::move(generated[g++]) : p.context);
    return out;
}

inline RealArray inpaint(const Sampler& sampler, const ToyUtterance& u, SymbolSpan span,
                         const std::vector<std::size_t>& new_text, const DurationModel* durations,
                         const nn::ParamStore* duration_params, std::uint64_t seed) {
    if (span.length == 0 && new_text.empty()) return u.tokens;
    return inpaint_many(sampler, {plan_inpaint(u, span, new_text, durations, duration_params)}, {seed}).front();
}

// ---------------------------------------------------------------------------
// Evaluation protocols

inline double token_error_rate(const ToyTask& task, const std::vector<RealArray>& outputs,
                               const std::vector<std::vector<std::size_t>>& references) {
    if (outputs.size() != references.size()) throw ShapeError("token_error_rate: one reference per output required");
    ErrorCounter counter;
    for (std::size_t i = 0; i < outputs.size(); ++i) counter.add(decode(task, outputs[i]).text, references[i]);
    return counter.rate();
}

struct SweepRow {
    double factor = 1.0;
    double token_error_rate = 0.0;
    double mean_total = 0.0;
};

/// Synthesis error rate when the predicted total length is scaled by each
/// factor (rounded, at least one token per symbol). Item i uses the same
/// noise stream under every factor.
inline std::vector<SweepRow> duration_sweep(const ToyTask& task, const Sampler& sampler, const DurationModel& durations,
                                            const nn::ParamStore& duration_params,
                                            const std::vector<ToyUtterance>& test_set, const std::vector<double>& factors,
                                            std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> texts;
    std::vector<double> raw;
    for (const auto& u : test_set) {
        texts.push_back(u.text);
        DurationQuery q{u.text, std::vector<std::size_t>(u.text.size(), 0), std::vector<bool>(u.text.size(), false)};
        double total = 0.0;
        for (double d : durations.predict(duration_params, q)) total += d;
        raw.push_back(total);
    }
    const auto seeds = item_seeds(seed, test_set.size());
    std::vector<SweepRow> rows;
    for (double f : factors) {
        if (!(f >= 0.5 && f <= 1.5)) throw DomainError("duration_sweep: factors must lie in [0.5, 1.5]");
        std::vector<std::size_t> totals;
        double sum = 0.0;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            totals.push_back(round_duration(raw[i] * f, texts[i].size()));
            sum += static_cast<double>(totals.back());
        }
        const auto out = synthesize_many(sampler, texts, totals, task.token_dim(), seeds);
        rows.push_back({f, token_error_rate(task, out, texts), sum / static_cast<double>(texts.size())});
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "factor,token_error_rate,mean_total\n";
    for (const auto& r : rows) out << r.factor << ',' << r.token_error_rate << ',' << r.mean_total << '\n';
}

struct DiversityResult {
    double dtw_mean = 0.0;
    double duration_mean = 0.0;
    std::size_t pairs = 0;
};

/// Euclidean distance between duration vectors, the shorter one padded
/// with zeros.
inline double duration_distance(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
        const double x = i < a.size() ? static_cast<double>(a[i]) : 0.0;
        const double y = i < b.size() ? static_cast<double>(b[i]) : 0.0;
        s += (x - y) * (x - y);
    }
    return std::sqrt(s);
}

inline DiversityResult pairwise_diversity(const ToyTask& task, const std::vector<RealArray>& samples) {
    if (samples.size() < 2) throw DomainError("diversity_eval: need at least two samples");
    std::vector<std::vector<std::size_t>> durs;
    for (const auto& s : samples) durs.push_back(decode(task, s).durations);
    DiversityResult r;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j, ++r.pairs) {
            r.dtw_mean += oracle::dtw_distance(samples[i], samples[j]);
            r.duration_mean += duration_distance(durs[i], durs[j]);
        }
    r.dtw_mean /= static_cast<double>(r.pairs);
    r.duration_mean /= static_cast<double>(r.pairs);
    return r;
}

/// n samples of one text from distinct noise streams. Without a prompt the
/// whole sequence is generated; with one, its tokens are kept as a prefix.
inline DiversityResult diversity_eval(const ToyTask& task, const Sampler& sampler, const std::vector<std::size_t>& text,
                                      std::size_t total_duration, std::size_t n_samples, std::uint64_t seed,
                                      const RealArray* prompt = nullptr) {
    if (n_samples < 2) throw DomainError("diversity_eval: need at least two samples");
    InfillItem item = synthesis_item(text, total_duration, task.token_dim());
    if (prompt) {
        if (prompt->rows() >= total_duration) throw DomainError("diversity_eval: prompt leaves nothing to generate");
        std::copy(prompt->data(), prompt->data() + prompt->size(), item.context.data());
        item.mask = MaskSpec::middle(prompt->rows(), total_duration - prompt->rows());
    }
    const std::vector<InfillItem> items(n_samples, item);
    return pairwise_diversity(task, run_infill(sampler, items, item_seeds(seed, n_samples)));
}

} // namespace e1::toytts
