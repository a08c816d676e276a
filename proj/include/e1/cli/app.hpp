#pragma once

// The e1tts command line: argument parsing, run directories, checkpoints,
// metrics CSVs and plots around the pipelines in experiments.hpp.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "e1/cli/checks.hpp"
#include "e1/cli/config.hpp"
#include "e1/cli/experiments.hpp"
#include "e1/cli/svg.hpp"
#include "e1/dmd/generator.hpp"
#include "e1/nn/checkpoint.hpp"

namespace e1::cli {

inline constexpr int kToolFormatVersion = 1;

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s{"train-teacher", "distill", "sample", "inpaint",
                                            "eval-sweep", "eval-diversity", "selftest"};
    return s;
}

inline std::string usage() {
    return "usage: e1tts <subcommand> <config> [options] [section.key=value ...]\n"
           "\n"
           "subcommands:\n"
           "  train-teacher   train the flow teacher (and duration model for toytts)\n"
           "  distill         distill a teacher checkpoint into a one-step generator\n"
           "  sample          draw samples; --steps 1 uses the distilled generator if present\n"
           "  inpaint         regenerate the middle third of test utterances (toytts)\n"
           "  eval-sweep      error rate against scaled predicted durations (toytts)\n"
           "  eval-diversity  pairwise DTW and duration diversity, teacher and student (toytts)\n"
           "  selftest        oracle and invariant checks (config optional)\n"
           "\n"
           "options:\n"
           "  --checkpoint P  input checkpoint (distill, sample, inpaint, eval-*)\n"
           "  --out D         output directory (default $E1_OUT_DIR/<subcommand>, else e1_out/<subcommand>)\n"
           "  --steps N       training steps (train-teacher, distill) or sampler steps (others)\n"
           "  --seed N        run.seed\n"
           "\n"
           "exit status: 0 success, 1 invalid arguments or config, 2 runtime failure\n";
}

struct Options {
    std::string subcommand;
    std::string config_path;
    std::string checkpoint;
    std::string out;
    std::optional<std::string> steps;
    std::optional<std::string> seed;
    std::vector<std::string> overrides;
};

inline Options parse_args(const std::vector<std::string>& args) {
    Options o;
    if (args.empty()) throw ConfigError("missing subcommand");
    o.subcommand = args[0];
    if (std::find(subcommands().begin(), subcommands().end(), o.subcommand) == subcommands().end()) {
        throw ConfigError("unknown subcommand '" + o.subcommand + "'");
    }
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto value = [&]() -> std::string {
            if (i + 1 >= args.size()) throw ConfigError(a + " needs a value");
            return args[++i];
        };
        if (a == "--checkpoint") o.checkpoint = value();
        else if (a == "--out") o.out = value();
        else if (a == "--steps") o.steps = value();
        else if (a == "--seed") o.seed = value();
        else if (a.rfind("--", 0) == 0) throw ConfigError("unknown option " + a);
        else if (a.find('=') != std::string::npos) o.overrides.push_back(a);
        else if (o.config_path.empty()) o.config_path = a;
        else throw ConfigError("unexpected argument '" + a + "'");
    }
    if (o.config_path.empty() && o.subcommand != "selftest") throw ConfigError("missing config file");
    return o;
}

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline std::filesystem::path output_dir(const Options& o) {
    if (!o.out.empty()) return o.out;
    const char* root = std::getenv("E1_OUT_DIR");
    return std::filesystem::path(root && *root ? root : "e1_out") / o.subcommand;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    f << std::setprecision(10);
    return f;
}

// Rows of metrics.csv, also kept for the loss plot.
class MetricsFile {
public:
    MetricsFile(const std::filesystem::path& path, bool wall_clock) : m_out(open_out(path)), m_wall(wall_clock) {
        m_out << "step,phase,loss,grad_norm,wall_ms\n";
    }

    MetricSink sink() {
        return [this](const MetricRow& r) {
            m_out << r.step << ',' << r.phase << ',' << r.loss << ',' << r.grad_norm << ','
                  << (m_wall ? r.wall_ms : 0.0) << '\n';
            auto& s = series(r.phase);
            s.x.push_back(static_cast<double>(r.step));
            s.y.push_back(r.loss);
        };
    }

    void plot(const std::filesystem::path& path, const std::string& title, bool log_y) const {
        Plot p(title, "step", "loss");
        for (const auto& s : m_series) p.add(s);
        p.log_y(log_y);
        auto f = open_out(path);
        p.write(f);
    }

private:
    Series& series(const std::string& phase) {
        for (auto& s : m_series)
            if (s.label == phase) return s;
        m_series.push_back({phase, {}, {}});
        return m_series.back();
    }

    std::ofstream m_out;
    bool m_wall;
    std::vector<Series> m_series;
};

class SummaryFile {
public:
    explicit SummaryFile(const std::filesystem::path& path) : m_out(open_out(path)) { m_out << "key,value\n"; }

    template <typename T>
    SummaryFile& add(const std::string& key, const T& value) {
        m_out << key << ',' << value << '\n';
        return *this;
    }

private:
    std::ofstream m_out;
};

// Space separated, so it sits in one CSV field.
inline std::string symbols(const std::vector<std::size_t>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + std::to_string(xs[i]);
    return out;
}

inline void write_plot(const std::filesystem::path& path, const Plot& plot) {
    auto f = open_out(path);
    plot.write(f);
}

inline Series points_series(const std::string& label, const RealArray& points) {
    Series s{label, {}, {}};
    for (std::size_t i = 0; i < points.rows(); ++i) {
        s.x.push_back(points(i, 0));
        s.y.push_back(points(i, 1));
    }
    return s;
}

} // namespace detail

/// Everything a subcommand needs: merged config, output directory, log.
class Run {
public:
    Run(const Options& o, std::ostream& log) : m_opts(o), m_config(experiment_schema()), m_log(log) {
        if (!o.config_path.empty()) m_config.merge_text(detail::read_file(o.config_path), o.config_path);
        for (const auto& a : o.overrides) m_config.apply_override(a);
        if (o.seed) m_config.set("run.seed", *o.seed, "--seed");
        if (o.steps) {
            const std::string key = o.subcommand == "train-teacher" ? "train.steps"
                                    : o.subcommand == "distill"     ? "distill.steps"
                                                                    : "sample.steps";
            m_config.set(key, *o.steps, "--steps");
        }
        const std::string task = m_config.get_string("run.task");
        if (task != "mixture2d" && task != "toytts") throw ConfigError("run.task must be mixture2d or toytts, got '" + task + "'");
        m_dir = detail::output_dir(o);
    }

    const Config& config() const noexcept { return m_config; }
    const Options& options() const noexcept { return m_opts; }
    std::ostream& log() { return m_log; }
    bool toytts() const { return m_config.get_string("run.task") == "toytts"; }
    std::filesystem::path path(const std::string& name) const { return m_dir / name; }

    /// Creates the directory and records the resolved config with versions.
    void prepare() {
        std::filesystem::create_directories(m_dir);
        auto f = detail::open_out(path("config.resolved"));
        f << "# e1tts resolved configuration\n"
          << "# subcommand = " << m_opts.subcommand << '\n'
          << "# tool_format_version = " << kToolFormatVersion << '\n'
          << "# checkpoint_format_version = " << nn::kCheckpointVersion << '\n'
          << "# dataset_format_version = " << toytts::kDatasetVersion << '\n'
          << m_config.resolved();
    }

    nn::NamedStores checkpoint() const {
        if (m_opts.checkpoint.empty()) throw ConfigError(m_opts.subcommand + " needs --checkpoint");
        return nn::load_stores(m_opts.checkpoint);
    }

    void require_toytts() const {
        if (!toytts()) throw ConfigError(m_opts.subcommand + " needs run.task = toytts");
    }

private:
    Options m_opts;
    Config m_config;
    std::ostream& m_log;
    std::filesystem::path m_dir;
};

namespace detail {

inline flow::MlpDrift load_mixture_teacher(const Run& run, const nn::NamedStores& stores) {
    Rng init(0);
    flow::MlpDrift m(mlp_config(run.config()), init);
    load_into(m.params(), stores, "teacher");
    return m;
}

inline toytts::T2TModel load_t2t(const Run& run, const toytts::ToyTask& task, const nn::NamedStores& stores) {
    Rng init(0);
    toytts::T2TModel m(t2t_config(run.config(), task), init);
    load_into(m.params(), stores, "teacher");
    return m;
}

inline toytts::DurationModel load_duration(const Run& run, const toytts::ToyTask& task, const nn::NamedStores& stores) {
    Rng init(0);
    toytts::DurationModel m(duration_config(run.config(), task), init);
    load_into(m.params(), stores, "duration");
    return m;
}

/// The distilled generator from a checkpoint, or none.
inline std::unique_ptr<dmd::DriftGenerator> load_generator(const flow::DriftModel& teacher, const nn::NamedStores& stores) {
    if (!stores.contains("generator")) return nullptr;
    auto g = std::make_unique<dmd::DriftGenerator>(teacher, flow::FlowSchedule{}.t_min);
    load_into(g->params(), stores, "generator");
    return g;
}

// Picks the generator for one step when one was distilled.
struct ToySamplers {
    toytts::T2TModel teacher;
    std::unique_ptr<dmd::DriftGenerator> generator;
    std::size_t steps;

    bool use_generator() const { return generator && steps == 1; }
    std::string model_name() const { return use_generator() ? "student" : "teacher"; }
    toytts::Sampler sampler() const {
        if (use_generator()) return toytts::one_step_sampler(*generator, generator->params());
        return toytts::euler_sampler(teacher, teacher.params(), steps);
    }
};

inline ToySamplers toy_samplers(const Run& run, const toytts::ToyTask& task, const nn::NamedStores& stores) {
    ToySamplers s{load_t2t(run, task, stores), nullptr, run.config().get_count("sample.steps")};
    s.generator = load_generator(s.teacher, stores);
    if (s.steps == 0) throw ConfigError("sample.steps must be positive");
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_train_teacher(Run& run) {
    const Config& c = run.config();
    detail::MetricsFile metrics(run.path("metrics.csv"), c.get_bool("run.wall_clock"));
    Rng rng(c.get_seed("run.seed"));
    if (!run.toytts()) {
        const auto mix = ring_mixture(c);
        auto teacher = train_mixture_teacher(mix, mlp_config(c), train_settings(c, "train"), rng, metrics.sink());
        nn::save_stores(run.path("teacher.e1ck").string(), {{"teacher", teacher.params()}});
        Rng er(c.get_seed("sample.seed"));
        const RealArray z = er.normal_array({c.get_count("sample.count"), 2});
        const RealArray x = flow::euler_sample(flow::drift_fn(teacher), z, std::max<std::size_t>(1, c.get_count("sample.steps")), nullptr);
        Rng hr(c.get_seed("eval.heldout_seed"));
        detail::write_plot(run.path("samples.svg"),
                           Plot("teacher samples", "x", "y", Plot::Kind::points)
                               .add(detail::points_series("data", oracle::sample(mix, x.rows(), hr)))
                               .add(detail::points_series("teacher", x))
                               .equal_aspect());
    } else {
        const auto task = toy_task(c);
        const auto data = toy_data(c, task);
        auto t2t = train_t2t(t2t_config(c, task), data.train, train_settings(c, "train"), rng, metrics.sink());
        auto dur = train_duration(duration_config(c, task), data.train, train_settings(c, "duration_train"), rng,
                                  metrics.sink());
        nn::save_stores(run.path("teacher.e1ck").string(), {{"teacher", t2t.params()}, {"duration", dur.params()}});
        auto f = detail::open_out(run.path("test.dataset"));
        toytts::write_dataset(f, task, c.get_seed("data.test_seed"), data.test);
    }
    metrics.plot(run.path("loss.svg"), "teacher training loss", true);
    run.log() << "wrote " << run.path("teacher.e1ck").string() << '\n';
}

inline void cmd_distill(Run& run) {
    const Config& c = run.config();
    const auto stores = run.checkpoint();
    detail::MetricsFile metrics(run.path("metrics.csv"), c.get_bool("run.wall_clock"));
    Rng rng(c.get_seed("run.seed"));
    const auto settings = distill_settings(c);
    nn::NamedStores out;
    if (!run.toytts()) {
        auto teacher = detail::load_mixture_teacher(run, stores);
        auto state = distill_mixture(teacher, settings, rng, metrics.sink());
        out = {{"teacher", teacher.params()}, {"generator", state->generator_ema().shadow()}};
        Rng er(c.get_seed("sample.seed"));
        const RealArray x = state->generate(er.normal_array({c.get_count("sample.count"), 2}), nullptr, true);
        detail::write_plot(run.path("samples.svg"), Plot("one-step samples", "x", "y", Plot::Kind::points)
                                                        .add(detail::points_series("student", x))
                                                        .equal_aspect());
    } else {
        const auto task = toy_task(c);
        const auto data = toy_data(c, task);
        auto teacher = detail::load_t2t(run, task, stores);
        auto state = distill_toytts(teacher, data.train, settings, rng, metrics.sink());
        out = {{"teacher", teacher.params()}, {"generator", state->generator_ema().shadow()}};
        if (stores.contains("duration")) out["duration"] = stores.at("duration");
    }
    nn::save_stores(run.path("student.e1ck").string(), out);
    metrics.plot(run.path("loss.svg"), "distillation losses", false);
    run.log() << "wrote " << run.path("student.e1ck").string() << '\n';
}

inline void cmd_sample(Run& run) {
    const Config& c = run.config();
    const auto stores = run.checkpoint();
    const std::size_t steps = c.get_count("sample.steps");
    if (steps == 0) throw ConfigError("sample.steps must be positive");
    detail::SummaryFile summary(run.path("summary.csv"));
    if (!run.toytts()) {
        const auto mix = ring_mixture(c);
        auto teacher = detail::load_mixture_teacher(run, stores);
        auto generator = detail::load_generator(teacher, stores);
        const bool student = generator && steps == 1;
        auto draw = [&](const RealArray& z) {
            return student ? generator->sample(generator->params(), z, nullptr)
                           : flow::euler_sample(flow::drift_fn(teacher), z, steps, nullptr);
        };
        Rng er(c.get_seed("sample.seed"));
        const RealArray x = draw(er.normal_array({c.get_count("sample.count"), 2}));
        const RealArray coverage = draw(er.normal_array({10000, 2}));
        Rng hr(c.get_seed("eval.heldout_seed"));
        const RealArray held = oracle::sample(mix, x.rows(), hr);
        const auto ev = evaluate_mixture(mix, x, held, coverage);
        Rng pr(c.get_seed("eval.heldout_seed") + 1);
        const auto test = oracle::mmd_permutation_test(x, held, c.get_count("eval.permutations"), pr);
        summary.add("model", student ? "student" : "teacher").add("steps", steps).add("count", x.rows());
        summary.add("mmd2_biased", ev.mmd).add("permutation_mmd2", test.statistic).add("null_threshold_99", test.threshold);
        summary.add("permutation_p_value", test.p_value).add("min_mode_fraction", ev.min_mode_fraction);
        for (std::size_t k = 0; k < ev.mode_fraction.size(); ++k) summary.add("mode_" + std::to_string(k), ev.mode_fraction[k]);
        auto f = detail::open_out(run.path("samples.csv"));
        f << "x,y\n";
        for (std::size_t i = 0; i < x.rows(); ++i) f << x(i, 0) << ',' << x(i, 1) << '\n';
        detail::write_plot(run.path("samples.svg"), Plot("samples", "x", "y", Plot::Kind::points)
                                                        .add(detail::points_series("held-out data", held))
                                                        .add(detail::points_series(student ? "student" : "teacher", x))
                                                        .equal_aspect());
        run.log() << (student ? "student" : "teacher") << " mmd2 " << ev.mmd << " min mode fraction "
                  << ev.min_mode_fraction << '\n';
    } else {
        const auto task = toy_task(c);
        const auto data = toy_data(c, task);
        const auto s = detail::toy_samplers(run, task, stores);
        const auto set = synthesis_set(data.test);
        const auto outs = toytts::synthesize_many(s.sampler(), set.texts, set.totals, task.token_dim(),
                                                  toytts::item_seeds(c.get_seed("sample.seed"), set.texts.size()));
        const double ter = toytts::token_error_rate(task, outs, set.texts);
        summary.add("model", s.model_name()).add("steps", steps).add("items", set.texts.size());
        summary.add("token_error_rate", ter);
        auto f = detail::open_out(run.path("samples.csv"));
        f << "item,reference,decoded,edits\n";
        for (std::size_t i = 0; i < outs.size(); ++i) {
            const auto d = toytts::decode(task, outs[i]).text;
            f << i << ',' << detail::symbols(set.texts[i]) << ',' << detail::symbols(d) << ','
              << toytts::edit_distance(d, set.texts[i]) << '\n';
        }
        run.log() << s.model_name() << " token error rate " << ter << '\n';
    }
}

inline void cmd_inpaint(Run& run) {
    run.require_toytts();
    const Config& c = run.config();
    const auto stores = run.checkpoint();
    const auto task = toy_task(c);
    const auto data = toy_data(c, task);
    const auto s = detail::toy_samplers(run, task, stores);
    const auto dur = detail::load_duration(run, task, stores);
    const auto ev = inpaint_eval(task, s.sampler(), dur, dur.params(), data.test, c.get_count("eval.inpaint_items"),
                                 c.get_seed("sample.seed"));
    detail::SummaryFile(run.path("summary.csv"))
        .add("model", s.model_name())
        .add("steps", s.steps)
        .add("items", ev.items)
        .add("token_error_rate", ev.error_rate)
        .add("context_mismatches", ev.context_mismatches);
    run.log() << "inpaint error rate " << ev.error_rate << ", context mismatches " << ev.context_mismatches << '\n';
}

inline void cmd_eval_sweep(Run& run) {
    run.require_toytts();
    const Config& c = run.config();
    const auto stores = run.checkpoint();
    const auto task = toy_task(c);
    const auto data = toy_data(c, task);
    const auto s = detail::toy_samplers(run, task, stores);
    const auto dur = detail::load_duration(run, task, stores);
    const auto factors = c.get_reals("eval.factors");
    if (factors.empty()) throw ConfigError("eval.factors is empty");
    for (double f : factors)
        if (!(f >= 0.5 && f <= 1.5)) throw ConfigError("eval.factors must lie in [0.5, 1.5]");
    const auto rows = toytts::duration_sweep(task, s.sampler(), dur, dur.params(), data.test, factors, c.get_seed("sample.seed"));
    auto f = detail::open_out(run.path("sweep.csv"));
    toytts::write_sweep_csv(f, rows);
    Series curve{s.model_name(), {}, {}};
    for (const auto& r : rows) {
        curve.x.push_back(r.factor);
        curve.y.push_back(r.token_error_rate);
        run.log() << "factor " << r.factor << " error rate " << r.token_error_rate << '\n';
    }
    detail::write_plot(run.path("sweep.svg"), Plot("duration scaling", "factor", "token error rate").add(curve));
}

inline void cmd_eval_diversity(Run& run) {
    run.require_toytts();
    const Config& c = run.config();
    const auto stores = run.checkpoint();
    const auto task = toy_task(c);
    const auto data = toy_data(c, task);
    auto s = detail::toy_samplers(run, task, stores);
    const std::size_t item = c.get_count("eval.diversity_item");
    if (item >= data.test.size()) throw ConfigError("eval.diversity_item is past the test set");
    const auto& u = data.test[item];
    const std::size_t n = c.get_count("eval.diversity_samples");
    if (n < 2) throw ConfigError("eval.diversity_samples must be at least 2");
    auto f = detail::open_out(run.path("diversity.csv"));
    f << "model,steps,dtw_mean,duration_mean,pairs\n";
    const auto teacher = toytts::diversity_eval(task, toytts::euler_sampler(s.teacher, s.teacher.params(), s.steps),
                                                u.text, u.n_speech(), n, c.get_seed("sample.seed"));
    f << "teacher," << s.steps << ',' << teacher.dtw_mean << ',' << teacher.duration_mean << ',' << teacher.pairs << '\n';
    run.log() << "teacher dtw " << teacher.dtw_mean << " duration " << teacher.duration_mean << '\n';
    if (s.generator) {
        const auto student = toytts::diversity_eval(task, toytts::one_step_sampler(*s.generator, s.generator->params()),
                                                    u.text, u.n_speech(), n, c.get_seed("sample.seed"));
        f << "student,1," << student.dtw_mean << ',' << student.duration_mean << ',' << student.pairs << '\n';
        run.log() << "student dtw " << student.dtw_mean << " duration " << student.duration_mean << '\n';
    }
}

inline int cmd_selftest(Run& run) {
    const auto results = run_selftest(&run.log());
    detail::SummaryFile summary(run.path("selftest.csv"));
    bool ok = true;
    for (const auto& r : results) {
        summary.add(r.name, r.pass ? "PASS" : "FAIL");
        ok = ok && r.pass;
    }
    return ok ? 0 : 2;
}

/// Runs one subcommand; returns the process exit status.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Options opts;
    try {
        opts = parse_args(args);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n\n" << usage();
        return 1;
    }
    try {
        Run r(opts, out);
        r.prepare();
        const std::string& s = opts.subcommand;
        if (s == "train-teacher") cmd_train_teacher(r);
        else if (s == "distill") cmd_distill(r);
        else if (s == "sample") cmd_sample(r);
        else if (s == "inpaint") cmd_inpaint(r);
        else if (s == "eval-sweep") cmd_eval_sweep(r);
        else if (s == "eval-diversity") cmd_eval_diversity(r);
        else return cmd_selftest(r);
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const nn::CheckpointVersionError& e) {
        err << "error: checkpoint version " << e.found_version << " found, this build reads version " << e.expected_version
            << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

} // namespace e1::cli
