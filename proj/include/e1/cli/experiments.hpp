#pragma once

// Experiment pipelines shared by the command line tool and the acceptance
// runner: teacher training, distillation and the evaluation protocols for
// the 2-D mixture and the toy text-to-token task. Settings come from a
// Config built on experiment_schema().

#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "e1/cli/config.hpp"
#include "e1/dmd/distill.hpp"
#include "e1/flow/drift.hpp"
#include "e1/flow/rectified_flow.hpp"
#include "e1/nn/checkpoint.hpp"
#include "e1/oracle/gaussian.hpp"
#include "e1/oracle/mmd.hpp"
#include "e1/toytts/duration.hpp"
#include "e1/toytts/inference.hpp"
#include "e1/toytts/t2t_model.hpp"
#include "e1/toytts/task.hpp"

namespace e1::cli {

/// Every key a config file may set.
inline const Schema& experiment_schema() {
    static const Schema s = [] {
        Schema k;
        using V = ValueType;
        k.add("run.task", V::string, "toytts", "mixture2d or toytts")
            .add("run.seed", V::integer, "1", "seed for training and sampling")
            .add("run.wall_clock", V::boolean, "false", "record wall_ms in metrics.csv (breaks byte determinism)")
            .add("run.log_every", V::integer, "100", "metrics.csv row interval in steps");

        k.add("mixture.modes", V::integer, "8", "components on a circle")
            .add("mixture.radius", V::real, "4.0", "circle radius")
            .add("mixture.std", V::real, "0.5", "per-component standard deviation")
            .add("mlp.hidden", V::integer, "128", "drift MLP width")
            .add("mlp.depth", V::integer, "4", "drift MLP linear layers")
            .add("mlp.time_features", V::integer, "16", "sinusoidal time features");

        k.add("task.seed", V::integer, "7", "codebook seed")
            .add("task.alphabet_size", V::integer, "16", "")
            .add("task.token_dim", V::integer, "8", "")
            .add("task.jitter_sigma", V::real, "0.05", "")
            .add("task.duration_noise", V::real, "0.05", "probability of a uniform duration redraw")
            .add("task.min_length", V::integer, "4", "")
            .add("task.max_length", V::integer, "12", "")
            .add("data.train_size", V::integer, "4000", "")
            .add("data.train_seed", V::integer, "1", "")
            .add("data.test_size", V::integer, "200", "")
            .add("data.test_seed", V::integer, "2", "");

        k.add("t2t.width", V::integer, "64", "")
            .add("t2t.heads", V::integer, "4", "")
            .add("t2t.blocks", V::integer, "3", "")
            .add("t2t.mlp_ratio", V::integer, "2", "")
            .add("t2t.time_features", V::integer, "16", "")
            .add("duration.width", V::integer, "32", "")
            .add("duration.heads", V::integer, "2", "")
            .add("duration.blocks", V::integer, "2", "");

        k.add("train.steps", V::integer, "12000", "teacher optimizer steps")
            .add("train.batch", V::integer, "32", "")
            .add("train.lr", V::real, "1e-3", "")
            .add("train.ema_decay", V::real, "0.999", "")
            .add("train.decay_at", V::real, "0.75", "fraction of steps after which lr is scaled")
            .add("train.decay_factor", V::real, "0.2", "")
            .add("duration_train.steps", V::integer, "1500", "")
            .add("duration_train.batch", V::integer, "32", "")
            .add("duration_train.lr", V::real, "3e-3", "")
            .add("duration_train.decay_at", V::real, "0.667", "")
            .add("duration_train.decay_factor", V::real, "0.1667", "");

        k.add("distill.steps", V::integer, "200", "generator steps")
            .add("distill.batch", V::integer, "16", "utterances (or points) per batch")
            .add("distill.lr", V::real, "1e-4", "generator and fake-score lr")
            .add("distill.ttur", V::integer, "10", "fake-score updates per generator update")
            .add("distill.ema_decay", V::real, "0.99", "")
            .add("distill.full_prob", V::real, "0.5", "probability that a toytts batch item is fully masked")
            .add("distill.max_grad_norm", V::real, "1e4", "divergence guard")
            .add("distill.decay_at", V::real, "1.0", "")
            .add("distill.decay_factor", V::real, "1.0", "");

        k.add("sample.steps", V::integer, "128", "Euler steps; 1 uses the distilled generator when present")
            .add("sample.count", V::integer, "1000", "mixture points to draw")
            .add("sample.seed", V::integer, "9", "noise seed for evaluation")
            .add("eval.heldout_seed", V::integer, "99", "")
            .add("eval.permutations", V::integer, "200", "")
            .add("eval.factors", V::real_list, "0.7,0.85,1.0,1.15,1.3", "duration sweep factors")
            .add("eval.diversity_samples", V::integer, "100", "")
            .add("eval.diversity_item", V::integer, "0", "test utterance whose text is sampled")
            .add("eval.inpaint_items", V::integer, "200", "");
        return k;
    }();
    return s;
}

/// One metrics.csv row.
struct MetricRow {
    std::uint64_t step = 0;
    std::string phase;
    double loss = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

using MetricSink = std::function<void(const MetricRow&)>;

struct TrainSettings {
    std::size_t steps = 0;
    std::size_t batch = 32;
    double lr = 1e-3;
    double ema_decay = 0.999;
    double decay_at = 1.0;
    double decay_factor = 1.0;
    std::size_t log_every = 100;

    std::size_t decay_step() const { return static_cast<std::size_t>(decay_at * static_cast<double>(steps)); }
};

struct DistillSettings {
    std::size_t steps = 200;
    std::size_t batch = 16;
    double lr = 1e-4;
    std::size_t ttur = 10;
    double ema_decay = 0.99;
    double full_prob = 0.5;
    double max_grad_norm = 1e4;
    double decay_at = 1.0;
    double decay_factor = 1.0;
    std::size_t log_every = 10;
};

inline TrainSettings train_settings(const Config& c, const std::string& section) {
    TrainSettings s;
    s.steps = c.get_count(section + ".steps");
    s.batch = c.get_count(section + ".batch");
    s.lr = c.get_real(section + ".lr");
    if (section == "train") s.ema_decay = c.get_real("train.ema_decay");
    s.decay_at = c.get_real(section + ".decay_at");
    s.decay_factor = c.get_real(section + ".decay_factor");
    s.log_every = std::max<std::size_t>(1, c.get_count("run.log_every"));
    if (s.batch == 0) throw ConfigError(section + ".batch must be positive");
    return s;
}

inline DistillSettings distill_settings(const Config& c) {
    DistillSettings s;
    s.steps = c.get_count("distill.steps");
    s.batch = c.get_count("distill.batch");
    s.lr = c.get_real("distill.lr");
    s.ttur = c.get_count("distill.ttur");
    s.ema_decay = c.get_real("distill.ema_decay");
    s.full_prob = c.get_real("distill.full_prob");
    s.max_grad_norm = c.get_real("distill.max_grad_norm");
    s.decay_at = c.get_real("distill.decay_at");
    s.decay_factor = c.get_real("distill.decay_factor");
    s.log_every = std::max<std::size_t>(1, c.get_count("run.log_every") / 10);
    if (s.batch == 0 || s.ttur == 0) throw ConfigError("distill.batch and distill.ttur must be positive");
    if (!(s.full_prob >= 0.0 && s.full_prob <= 1.0)) throw ConfigError("distill.full_prob must lie in [0, 1]");
    return s;
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Averages losses between log points and forwards one row per interval.
class LossLogger {
public:
    LossLogger(const MetricSink& sink, std::string phase, std::size_t every)
        : m_sink(sink), m_phase(std::move(phase)), m_every(every), m_t0(std::chrono::steady_clock::now()) {}

    void add(std::size_t step, double loss, double grad_norm) {
        m_loss += loss;
        m_norm += grad_norm;
        ++m_count;
        if (m_sink && (step % m_every == 0)) {
            const double n = static_cast<double>(m_count);
            m_sink({step, m_phase, m_loss / n, m_norm / n, elapsed_ms(m_t0)});
            m_loss = m_norm = 0.0;
            m_count = 0;
        }
    }

private:
    const MetricSink& m_sink;
    std::string m_phase;
    std::size_t m_every;
    std::chrono::steady_clock::time_point m_t0;
    double m_loss = 0.0, m_norm = 0.0;
    std::size_t m_count = 0;
};

} // namespace detail

// ---------------------------------------------------------------------------
// 2-D mixture

/// Equal-weight isotropic components evenly spaced on a circle.
inline oracle::MixtureSpec ring_mixture(std::size_t modes, double radius, double std_dev) {
    if (modes == 0 || !(radius >= 0.0) || !(std_dev > 0.0)) throw ConfigError("mixture: need modes > 0, radius >= 0, std > 0");
    oracle::MixtureSpec m;
    for (std::size_t k = 0; k < modes; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
        m.components.push_back({1.0 / static_cast<double>(modes),
                                oracle::GaussianSpec::isotropic(RealArray::vector({radius * std::cos(a), radius * std::sin(a)}),
                                                                std_dev * std_dev)});
    }
    return m;
}

inline oracle::MixtureSpec ring_mixture(const Config& c) {
    return ring_mixture(c.get_count("mixture.modes"), c.get_real("mixture.radius"), c.get_real("mixture.std"));
}

inline flow::MlpDriftConfig mlp_config(const Config& c) {
    return {.dim = 2, .hidden = c.get_count("mlp.hidden"), .depth = c.get_count("mlp.depth"),
            .time_features = c.get_count("mlp.time_features")};
}

/// Rectified-flow training on fresh mixture draws; returns the model
/// holding its EMA weights.
inline flow::MlpDrift train_mixture_teacher(const oracle::MixtureSpec& data, const flow::MlpDriftConfig& config,
                                            const TrainSettings& s, Rng& rng, const MetricSink& sink = {}) {
    flow::MlpDrift model(config, rng);
    nn::AdamW opt(model.params(), {.lr = s.lr});
    nn::Ema ema(model.params(), s.ema_decay);
    detail::LossLogger log(sink, "teacher", s.log_every);
    for (std::size_t i = 0; i < s.steps; ++i) {
        if (i == s.decay_step()) opt.set_lr(s.lr * s.decay_factor);
        const auto st = flow::dsm_update(model, opt, oracle::sample(data, s.batch, rng), nullptr, rng, flow::TimeSampler{});
        ema.update(model.params());
        log.add(i + 1, st.loss, st.grad_norm);
    }
    model.params() = ema.shadow();
    return model;
}

inline dmd::DistillConfig distill_config(const DistillSettings& s) {
    dmd::DistillConfig c;
    c.generator_optimizer.lr = s.lr;
    c.fake_optimizer.lr = s.lr;
    c.ttur_ratio = s.ttur;
    c.ema_decay = s.ema_decay;
    c.max_grad_norm = s.max_grad_norm;
    return c;
}

/// Runs the distillation loop with logging and the optional lr decay.
inline void run_distill(dmd::DistillState& state, const DistillSettings& s, const dmd::BatchSource& source, Rng& rng,
                        const MetricSink& sink = {}) {
    detail::LossLogger gen_log(sink, "gen", s.log_every);
    detail::LossLogger fake_log(sink, "fake", s.log_every);
    const auto decay = static_cast<std::size_t>(s.decay_at * static_cast<double>(s.steps));
    std::size_t fake_seen = 0;
    for (std::size_t i = 0; i < s.steps; ++i) {
        if (i == decay) {
            state.generator_optimizer().set_lr(s.lr * s.decay_factor);
            state.fake_optimizer().set_lr(s.lr * s.decay_factor);
        }
        dmd::distill(state, 1, source, rng, [&](const dmd::StepMetrics& m) {
            if (m.phase == dmd::Phase::generator) gen_log.add(m.step, m.loss, m.grad_norm);
            else fake_log.add(++fake_seen, m.loss, m.grad_norm);
        });
    }
}

inline std::unique_ptr<dmd::DistillState> distill_mixture(const flow::DriftModel& teacher, const DistillSettings& s,
                                                         Rng& rng, const MetricSink& sink = {}) {
    auto state = std::make_unique<dmd::DistillState>(teacher, distill_config(s));
    const std::size_t rows = s.batch;
    run_distill(*state, s, [rows](Rng&) { return dmd::Batch{nullptr, rows}; }, rng, sink);
    return state;
}

/// Fraction of points whose nearest component mean is k.
inline std::vector<double> mode_fractions(const oracle::MixtureSpec& m, const RealArray& points) {
    std::vector<double> out(m.components.size(), 0.0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m.components.size(); ++k) {
            const double d = oracle::detail::sq_dist(points.row(i), m.components[k].gaussian.mean.span());
            if (d < best_d) best_d = d, best = k;
        }
        out[best] += 1.0;
    }
    for (double& f : out) f /= static_cast<double>(std::max<std::size_t>(1, points.rows()));
    return out;
}

struct MixtureEval {
    double mmd = 0.0;  // biased squared MMD against held-out data
    double min_mode_fraction = 0.0;
    std::vector<double> mode_fraction;
};

/// The bandwidth is the median pairwise distance of the held-out set, so
/// every model is scored with the same kernel.
inline MixtureEval evaluate_mixture(const oracle::MixtureSpec& m, const RealArray& samples, const RealArray& heldout,
                                    const RealArray& coverage_samples) {
    MixtureEval r;
    r.mmd = oracle::mmd_biased(samples, heldout, oracle::median_pairwise_distance(heldout));
    r.mode_fraction = mode_fractions(m, coverage_samples);
    r.min_mode_fraction = *std::min_element(r.mode_fraction.begin(), r.mode_fraction.end());
    return r;
}

// ---------------------------------------------------------------------------
// Toy text-to-token task

inline toytts::ToyTask toy_task(const Config& c) {
    toytts::ToyTaskConfig t;
    t.alphabet_size = c.get_count("task.alphabet_size");
    t.token_dim = c.get_count("task.token_dim");
    t.jitter_sigma = c.get_real("task.jitter_sigma");
    t.duration_noise = c.get_real("task.duration_noise");
    t.min_length = c.get_count("task.min_length");
    t.max_length = c.get_count("task.max_length");
    try {
        return toytts::ToyTask(t, c.get_seed("task.seed"));
    } catch (const DomainError& e) {
        throw ConfigError(std::string("task: ") + e.what());
    }
}

inline toytts::T2TConfig t2t_config(const Config& c, const toytts::ToyTask& task) {
    return {.alphabet_size = task.alphabet_size(), .token_dim = task.token_dim(), .width = c.get_count("t2t.width"),
            .heads = c.get_count("t2t.heads"), .blocks = c.get_count("t2t.blocks"),
            .mlp_ratio = c.get_count("t2t.mlp_ratio"), .time_features = c.get_count("t2t.time_features")};
}

inline toytts::DurationConfig duration_config(const Config& c, const toytts::ToyTask& task) {
    return {.alphabet_size = task.alphabet_size(), .width = c.get_count("duration.width"),
            .heads = c.get_count("duration.heads"), .blocks = c.get_count("duration.blocks")};
}

struct ToyData {
    std::vector<toytts::ToyUtterance> train, test;
};

inline ToyData toy_data(const Config& c, const toytts::ToyTask& task) {
    const std::size_t n_train = c.get_count("data.train_size"), n_test = c.get_count("data.test_size");
    if (n_train == 0 || n_test == 0) throw ConfigError("data: train_size and test_size must be positive");
    return {toytts::gen_dataset(task, n_train, c.get_seed("data.train_seed")),
            toytts::gen_dataset(task, n_test, c.get_seed("data.test_seed"))};
}

/// Masked infilling training; returns the model holding its EMA weights.
inline toytts::T2TModel train_t2t(const toytts::T2TConfig& config, const std::vector<toytts::ToyUtterance>& train,
                                  const TrainSettings& s, Rng& rng, const MetricSink& sink = {}) {
    toytts::T2TModel model(config, rng);
    nn::AdamW opt(model.params(), {.lr = s.lr});
    nn::Ema ema(model.params(), s.ema_decay);
    detail::LossLogger log(sink, "teacher", s.log_every);
    for (std::size_t i = 0; i < s.steps; ++i) {
        if (i == s.decay_step()) opt.set_lr(s.lr * s.decay_factor);
        const auto st = toytts::t2t_train_step(model, opt, toytts::draw_minibatch(train, s.batch, rng), rng);
        ema.update(model.params());
        log.add(i + 1, st.loss, st.grad_norm);
    }
    model.params() = ema.shadow();
    return model;
}

inline toytts::DurationModel train_duration(const toytts::DurationConfig& config,
                                            const std::vector<toytts::ToyUtterance>& train, const TrainSettings& s,
                                            Rng& rng, const MetricSink& sink = {}) {
    toytts::DurationModel model(config, rng);
    nn::AdamW opt(model.params(), {.lr = s.lr});
    detail::LossLogger log(sink, "duration", s.log_every);
    for (std::size_t i = 0; i < s.steps; ++i) {
        if (i == s.decay_step()) opt.set_lr(s.lr * s.decay_factor);
        const double loss = toytts::duration_train_step(model, opt, toytts::draw_minibatch(train, s.batch, rng), rng);
        log.add(i + 1, loss, 0.0);
    }
    return model;
}

/// Distillation batches: each utterance is fully masked with probability
/// full_prob, otherwise it gets a middle mask.
inline dmd::BatchSource toy_batch_source(const std::vector<toytts::ToyUtterance>& train, std::size_t batch,
                                         double full_prob) {
    return [&train, batch, full_prob](Rng& r) {
        std::vector<toytts::InfillItem> items;
        for (const auto* u : toytts::draw_minibatch(train, batch, r)) {
            const bool full = r.bernoulli(full_prob);
            items.push_back({u->text, u->tokens,
                             full ? toytts::MaskSpec::full(u->n_speech()) : toytts::sample_mask(u->n_speech(), r, 0.0)});
        }
        auto b = std::make_shared<toytts::InfillBatch>(std::move(items));
        const std::size_t rows = b->free_rows();
        return dmd::Batch{std::move(b), rows};
    };
}

inline std::unique_ptr<dmd::DistillState> distill_toytts(const toytts::T2TModel& teacher,
                                                        const std::vector<toytts::ToyUtterance>& train,
                                                        const DistillSettings& s, Rng& rng, const MetricSink& sink = {}) {
    auto state = std::make_unique<dmd::DistillState>(teacher, distill_config(s));
    run_distill(*state, s, toy_batch_source(train, s.batch, s.full_prob), rng, sink);
    return state;
}

/// Texts and ground-truth totals of a test set.
struct SynthesisSet {
    std::vector<std::vector<std::size_t>> texts;
    std::vector<std::size_t> totals;
};

inline SynthesisSet synthesis_set(const std::vector<toytts::ToyUtterance>& test) {
    SynthesisSet s;
    for (const auto& u : test) {
        s.texts.push_back(u.text);
        s.totals.push_back(u.n_speech());
    }
    return s;
}

inline double synthesis_error(const toytts::ToyTask& task, const toytts::Sampler& sampler, const SynthesisSet& set,
                              std::uint64_t seed) {
    const auto out = toytts::synthesize_many(sampler, set.texts, set.totals, task.token_dim(),
                                             toytts::item_seeds(seed, set.texts.size()));
    return toytts::token_error_rate(task, out, set.texts);
}

struct InpaintEval {
    double error_rate = 0.0;
    std::size_t items = 0;
    std::size_t context_mismatches = 0;  // prefix/suffix values that differ from the input
};

/// Regenerates the middle third (by symbols) of each utterance with its own
/// text and checks the whole-sequence decode and the untouched context.
inline InpaintEval inpaint_eval(const toytts::ToyTask& task, const toytts::Sampler& sampler,
                                const toytts::DurationModel& dm, const nn::ParamStore& dp,
                                const std::vector<toytts::ToyUtterance>& test, std::size_t n, std::uint64_t seed) {
    n = std::min(n, test.size());
    std::vector<toytts::InpaintPlan> plans;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = test[i];
        const auto span = toytts::middle_third(u.text.size());
        const std::vector<std::size_t> same(u.text.begin() + static_cast<std::ptrdiff_t>(span.start),
                                            u.text.begin() + static_cast<std::ptrdiff_t>(span.start + span.length));
        plans.push_back(toytts::plan_inpaint(u, span, same, &dm, &dp));
    }
    const auto outputs = toytts::inpaint_many(sampler, plans, toytts::item_seeds(seed, n));
    InpaintEval r;
    r.items = n;
    std::vector<std::vector<std::size_t>> refs;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = test[i];
        const auto& p = plans[i];
        refs.push_back(u.text);
        const std::size_t d = task.token_dim();
        const RealArray& out = outputs[i];
        const std::size_t tail = out.rows() - p.suffix_rows;
        const std::size_t old_tail = u.n_speech() - p.suffix_rows;
        // bitwise comparison: clean context must be copied, not recomputed
        for (std::size_t row = 0; row < p.prefix_rows; ++row)
            for (std::size_t j = 0; j < d; ++j)
                if (std::bit_cast<std::uint64_t>(out(row, j)) != std::bit_cast<std::uint64_t>(u.tokens(row, j)))
                    ++r.context_mismatches;
        for (std::size_t k = 0; k < p.suffix_rows; ++k)
            for (std::size_t j = 0; j < d; ++j)
                if (std::bit_cast<std::uint64_t>(out(tail + k, j)) != std::bit_cast<std::uint64_t>(u.tokens(old_tail + k, j)))
                    ++r.context_mismatches;
    }
    r.error_rate = toytts::token_error_rate(task, outputs, refs);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

/// Copies a checkpoint store into a model's parameters, requiring identical
/// names and shapes.
inline void load_into(nn::ParamStore& target, const nn::NamedStores& stores, const std::string& name) {
    auto it = stores.find(name);
    if (it == stores.end()) throw FormatError("checkpoint has no '" + name + "' store");
    target.require_compatible(it->second, "checkpoint store '" + name + "'");
    target = it->second;
}

} // namespace e1::cli
