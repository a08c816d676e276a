#pragma once

// Fast oracle and invariant checks. The selftest subcommand runs all of
// them; the acceptance runner reuses them for the property criteria.

#include <cmath>
#include <cstring>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "e1/cli/experiments.hpp"
#include "e1/dmd/generator.hpp"
#include "e1/nn/attention.hpp"
#include "e1/nn/layers.hpp"
#include "e1/nn/rope.hpp"
#include "e1/oracle/analytic.hpp"
#include "e1/oracle/finite_diff.hpp"
#include "e1/oracle/stats.hpp"
#include "e1/toytts/mask.hpp"

namespace e1::cli {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

inline oracle::GaussianSpec anisotropic_2d() {
    return {RealArray::vector({1.0, -1.0}), RealArray::matrix(2, 2, {0.6, 0.2, 0.2, 0.4})};
}

inline bool same_bits(const nn::ParamStore& a, const nn::ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].value.shape() != b[i].value.shape()) return false;
        if (std::memcmp(a[i].value.data(), b[i].value.data(), a[i].value.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

template <typename Build>
double autodiff_vs_fd(const nn::ParamStore& params, Build&& build) {
    auto [loss, grads] = nn::forward_backward(params, build);
    auto fd = oracle::finite_diff_grad(
        [&](const nn::ParamStore& p) {
            nn::Graph g;
            nn::Bound b(g, p, false);
            return g.value(build(g, b))[0];
        },
        params);
    return oracle::max_relative_error(grads, fd, 1e-6);
}

} // namespace detail

/// Score recovered from the analytic drift equals the perturbed Gaussian
/// score on a 10 x 10 x 10 grid of points and times.
inline CheckResult check_conversion_identity() {
    double worst = 0.0;
    for (const auto& g : {oracle::GaussianSpec::isotropic(RealArray::vector({0.0, 0.0})), detail::anisotropic_2d()})
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                for (int k = 0; k < 10; ++k) {
                    const double t = 0.05 + 0.1 * k;
                    RealArray x = RealArray::vector({-3.0 + 6.0 * i / 9.0, -3.0 + 6.0 * j / 9.0});
                    const RealArray s = flow::score_from_drift(oracle::analytic_drift(g, t, x), x, t);
                    worst = std::max(worst, max_abs_diff(s, oracle::gaussian_perturbed_score(g, t, x)));
                }
    return {"score from drift matches analytic score", worst <= 1e-9, "max abs error " + detail::fmt(worst)};
}

/// Generator gradient of an affine 1-D generator against finite differences
/// of the quadrature-integrated weighted KL objective.
inline CheckResult check_generator_gradient() {
    const flow::FlowSchedule schedule{};
    const dmd::WeightingSpec w{};
    const oracle::GaussianSpec data{RealArray::vector({0.7}), RealArray::matrix(1, 1, {0.5})};
    const auto batch = oracle::quadrature_batch_1d(schedule, 64, 3);
    Rng rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        dmd::AffineGenerator gen(1);
        gen.set(RealArray::matrix(1, 1, {rng.uniform(0.3, 2.0)}), RealArray::vector({rng.uniform(-1.0, 1.0)}));
        const auto grad = dmd::generator_gradient(gen, gen.params(), batch, oracle::analytic_score(oracle::affine_law(gen)),
                                                  oracle::analytic_score(data), w);
        const auto fd = oracle::finite_diff_grad(
            [&](const nn::ParamStore& p) {
                dmd::AffineGenerator probe(1);
                probe.params() = p;
                return oracle::weighted_perturbed_kl(oracle::affine_law(probe), data, w.weight, schedule.t_min,
                                                     schedule.t_max, 64);
            },
            gen.params(), 1e-5);
        worst = std::max(worst, oracle::relative_error(grad.grads, fd));
    }
    return {"generator gradient matches finite differences", worst < 1e-3, "max relative error " + detail::fmt(worst)};
}

/// Distillation with analytic teacher and fake scores drives an affine
/// generator onto an anisotropic 2-D Gaussian.
inline CheckResult check_analytic_distillation(std::size_t steps = 3000) {
    const oracle::GaussianSpec data{RealArray::vector({1.0, -2.0}), RealArray::matrix(2, 2, {1.5, 0.4, 0.4, 0.6})};
    dmd::AffineGenerator gen(2);
    nn::AdamW opt(gen.params(), {.lr = 1e-2});
    Rng rng(7);
    const auto real = oracle::analytic_score(data);
    for (std::size_t step = 0; step < steps; ++step) {
        auto batch = dmd::draw_generator_batch(rng.normal_array({256, 2}), nullptr, rng, flow::TimeSampler{});
        const auto fake = oracle::analytic_score(oracle::affine_law(gen));
        opt.step(gen.params(), dmd::generator_gradient(gen, gen.params(), batch, fake, real, {}).grads);
    }
    const double kl = oracle::gaussian_kl(oracle::moment_fit(gen.sample(rng.normal_array({10000, 2}), nullptr)), data);
    return {"analytic distillation reaches the Gaussian target", steps <= 5000 && kl < 0.01,
            std::to_string(steps) + " steps, KL " + detail::fmt(kl)};
}

/// Full-mask rate over 1e5 draws and, for every middle length, uniform
/// start positions.
inline CheckResult check_mask_statistics() {
    Rng rng(2);
    std::size_t full = 0;
    const std::size_t n = 8, draws = 100000;
    std::map<std::size_t, std::vector<double>> starts;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto m = toytts::sample_mask(n, rng);
        m.validate(n);
        if (m.mode == toytts::MaskSpec::Mode::full) {
            ++full;
            continue;
        }
        auto& c = starts[m.length];
        c.resize(n - m.length + 1);
        c[m.start] += 1.0;
    }
    const double rate = static_cast<double>(full) / static_cast<double>(draws);
    double min_p = 1.0;
    for (const auto& [len, counts] : starts) {
        if (counts.size() < 2) continue;
        const double each = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
        min_p = std::min(min_p, oracle::chi_square_p(counts, std::vector<double>(counts.size(), each)));
    }
    const bool ok = rate >= 0.094 && rate <= 0.106 && min_p > 0.01 && starts.size() == n;
    return {"mask sampler statistics", ok, "full rate " + detail::fmt(rate) + ", min start p-value " + detail::fmt(min_p)};
}

/// Rotation keeps norms, logits depend only on index differences, and the
/// fractional speech indices for 2 symbols and 4 tokens are 0, .5, 1, 1.5.
inline CheckResult check_rope() {
    Rng rng(21);
    const RealArray v = rng.normal_array({6, 8});
    const std::vector<double> idx{0.3, 1.7, 5.0, 12.25, 100.5, 3.0};
    const RealArray r = nn::rope_apply(v, idx);
    double norm_err = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
        norm_err = std::max(norm_err, std::abs(std::sqrt(squared_norm(r.row(i))) - std::sqrt(squared_norm(v.row(i)))));
    double shift_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const RealArray q = rng.normal_array({16}), k = rng.normal_array({16});
        const double i = rng.uniform(0, 20), j = rng.uniform(0, 20), c = rng.uniform(-50, 50);
        shift_err = std::max(shift_err, std::abs(nn::rope_logit(q.span(), i, k.span(), j, 1e4) -
                                                 nn::rope_logit(q.span(), i + c, k.span(), j + c, 1e4)));
    }
    const auto table = nn::assign_position_indices(2, 4).speech_indices;
    const bool exact = table == std::vector<double>{0.0, 0.5, 1.0, 1.5};
    return {"rotary position properties", norm_err <= 1e-9 && shift_err <= 1e-6 && exact,
            "norm error " + detail::fmt(norm_err) + ", shift error " + detail::fmt(shift_err) +
                (exact ? ", index table exact" : ", index table wrong")};
}

/// Autodiff against finite differences on an MLP and an attention block.
inline CheckResult check_autodiff() {
    Rng rng(11);
    nn::Mlp mlp = nn::Mlp::make("mlp", 3, 8, 2, 2, nn::Activation::tanh);
    nn::ParamStore mp;
    mlp.init(mp, rng);
    const RealArray x = rng.normal_array({6, 3}), y = rng.normal_array({6, 2});
    const double e_mlp = detail::autodiff_vs_fd(
        mp, [&](nn::Graph& g, const nn::Bound& b) { return nn::mean_squared_error(mlp(b, g.constant(x)), y); });

    nn::TransformerBlock block{"blk", 8, 2, 2, 10000.0};
    nn::ParamStore bp;
    block.init(bp, rng);
    const RealArray xs = rng.normal_array({7, 8}), ys = rng.normal_array({7, 8});
    const std::vector<nn::Segment> segments{{0, 3}, {3, 4}};
    const std::vector<double> positions{0, 1, 2, 0, 0.75, 1.5, 2.25};
    const double e_att = detail::autodiff_vs_fd(bp, [&](nn::Graph& g, const nn::Bound& b) {
        return nn::mean_squared_error(block(b, g.constant(xs), segments, positions), ys);
    });
    const double worst = std::max(e_mlp, e_att);
    return {"reverse-mode gradients match finite differences", worst < 1e-4, "max relative error " + detail::fmt(worst)};
}

/// Two AdamW steps and EMA updates against closed-form values.
inline CheckResult check_optimizers() {
    nn::ParamStore p;
    p.add("w", RealArray::scalar(1.0));
    nn::Grads g1, g2;
    g1.add("w", RealArray::scalar(1.0));
    g2.add("w", RealArray::scalar(-0.5));
    nn::AdamW opt(p, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.95, .weight_decay = 0.0, .eps = 1e-8});
    opt.step(p, g1);
    double err = std::abs(p.get("w")[0] - (1.0 - 0.1 / (1.0 + 1e-8)));
    const double w1 = p.get("w")[0];
    opt.step(p, g2);
    const double m = (0.9 * 0.1 - 0.05) / (1 - 0.81), v = (0.95 * 0.05 + 0.05 * 0.25) / (1 - 0.9025);
    err = std::max(err, std::abs(p.get("w")[0] - (w1 - 0.1 * m / (std::sqrt(v) + 1e-8))));

    // decoupled weight decay: w <- w - lr (update + decay w)
    nn::ParamStore q;
    q.add("w", RealArray::scalar(2.0));
    nn::Grads zero;
    zero.add("w", RealArray::scalar(0.0));
    nn::AdamW decay(q, {.lr = 0.1, .weight_decay = 0.01});
    decay.step(q, zero);
    err = std::max(err, std::abs(q.get("w")[0] - 2.0 * (1.0 - 0.1 * 0.01)));

    nn::ParamStore shadow, target;
    shadow.add("w", RealArray::vector({0.0, 4.0}));
    target.add("w", RealArray::vector({2.0, 2.0}));
    nn::Ema ema(shadow, 0.9999);
    ema.update(target);
    err = std::max(err, std::abs(ema.shadow().get("w")[0] - 0.0001 * 2.0));
    err = std::max(err, std::abs(ema.shadow().get("w")[1] - (0.9999 * 4.0 + 0.0001 * 2.0)));
    return {"AdamW and EMA match hand oracles", err <= 1e-12, "max abs error " + detail::fmt(err)};
}

inline CheckResult check_checkpoint_round_trip() {
    Rng rng(31);
    nn::ParamStore p;
    p.add("a.weight", rng.normal_array({3, 4}));
    p.add("a.bias", rng.normal_array({4}));
    p.add("s", RealArray::scalar(-0.0));
    p[0].value[1] = 1e-310;
    p[0].value[2] = -1e300;
    const bool flat = detail::same_bits(nn::decode_checkpoint(nn::encode_checkpoint(p)), p);
    const auto named = nn::split_stores(nn::decode_checkpoint(nn::encode_checkpoint(nn::flatten_stores({{"x", p}, {"y", p}}))));
    const bool stores = named.size() == 2 && detail::same_bits(named.at("x"), p) && detail::same_bits(named.at("y"), p);
    bool magic = false;
    std::string bad = nn::encode_checkpoint(p);
    bad[0] = 'X';
    try {
        nn::decode_checkpoint(bad);
    } catch (const FormatError&) {
        magic = true;
    }
    return {"checkpoint round trip is bit exact", flat && stores && magic,
            std::string(flat ? "flat ok" : "flat differs") + (stores ? ", named ok" : ", named differs") +
                (magic ? ", bad magic rejected" : ", bad magic accepted")};
}

/// Metrics text of a short seeded training and distillation run.
inline std::string seeded_run_metrics(std::uint64_t seed) {
    std::ostringstream out;
    const MetricSink sink = [&](const MetricRow& r) {
        out << r.step << ',' << r.phase << ',' << std::setprecision(17) << r.loss << ',' << r.grad_norm << '\n';
    };
    Rng rng(seed);
    const auto mix = ring_mixture(4, 2.0, 0.3);
    TrainSettings ts{.steps = 40, .batch = 32, .lr = 2e-3, .ema_decay = 0.9, .log_every = 10};
    auto teacher = train_mixture_teacher(mix, {.dim = 2, .hidden = 16, .depth = 3, .time_features = 8}, ts, rng, sink);
    DistillSettings ds{.steps = 4, .batch = 32, .lr = 1e-3, .ttur = 2, .log_every = 1};
    auto state = distill_mixture(teacher, ds, rng, sink);
    const RealArray x = state->generate(rng.normal_array({5, 2}), nullptr, true);
    for (double v : x.values()) out << std::setprecision(17) << v << '\n';

    toytts::ToyTask task({}, 3);
    const auto data = toytts::gen_dataset(task, 16, 4);
    TrainSettings tt{.steps = 6, .batch = 4, .lr = 1e-3, .ema_decay = 0.9, .log_every = 2};
    train_t2t({.width = 16, .heads = 2, .blocks = 1, .mlp_ratio = 2, .time_features = 8}, data, tt, rng, sink);
    return out.str();
}

inline CheckResult check_seeded_determinism() {
    const std::string a = seeded_run_metrics(5), b = seeded_run_metrics(5), c = seeded_run_metrics(6);
    return {"seeded runs are byte identical", a == b && a != c,
            std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different") + " on repeat"};
}

/// Everything selftest runs, in order.
inline std::vector<CheckResult> run_selftest(std::ostream* progress = nullptr) {
    std::vector<CheckResult (*)()> checks{check_conversion_identity, check_generator_gradient,
                                          [] { return check_analytic_distillation(); }, check_mask_statistics,
                                          check_rope, check_autodiff, check_optimizers, check_checkpoint_round_trip,
                                          check_seeded_determinism};
    std::vector<CheckResult> out;
    for (auto* check : checks) {
        out.push_back(check());
        if (progress) *progress << (out.back().pass ? "PASS " : "FAIL ") << out.back().name << " (" << out.back().detail << ")\n";
    }
    return out;
}

} // namespace e1::cli
