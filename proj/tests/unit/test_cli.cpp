#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "e1/cli/app.hpp"

using namespace e1;
using namespace e1::cli;
namespace fs = std::filesystem;

namespace {

Schema small_schema() {
    Schema s;
    s.add("a.n", ValueType::integer, "1")
        .add("a.x", ValueType::real, "0.5")
        .add("a.flag", ValueType::boolean, "false")
        .add("b.name", ValueType::string, "none")
        .add("b.list", ValueType::real_list, "1,2");
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Every element opened is closed in order; attributes are quoted.
bool balanced_xml(const std::string& doc) {
    std::vector<std::string> open;
    std::size_t i = 0;
    while ((i = doc.find('<', i)) != std::string::npos) {
        const std::size_t end = doc.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = doc.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
        if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
        if (tag[0] == '/') {
            if (open.empty() || open.back() != tag.substr(1)) return false;
            open.pop_back();
        } else if (tag.back() != '/') {
            open.push_back(tag.substr(0, tag.find(' ')));
        }
    }
    return open.empty();
}

class TempDir {
public:
    TempDir() : m_path(fs::temp_directory_path() / ("e1cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++))) {
        fs::create_directories(m_path);
    }
    ~TempDir() { fs::remove_all(m_path); }
    const fs::path& path() const { return m_path; }
    fs::path operator/(const std::string& s) const { return m_path / s; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    fs::path m_path;
};

const char* kTinyMixture = R"(# tiny
[run]
task = mixture2d
seed = 4
log_every = 5

[mlp]
hidden = 16
depth = 3
time_features = 8

[train]
steps = 30
batch = 64

[distill]
steps = 4
batch = 64
ttur = 2
lr = 1e-3

[sample]
steps = 4
count = 50

[eval]
permutations = 10
)";

const char* kTinyToy = R"([run]
task = toytts
seed = 2
log_every = 2
[data]
train_size = 40
test_size = 6
[t2t]
width = 16
heads = 2
blocks = 1
time_features = 8
[duration]
width = 16
blocks = 1
[train]
steps = 6
batch = 4
[duration_train]
steps = 4
batch = 4
[distill]
steps = 2
batch = 2
ttur = 2
[sample]
steps = 2
[eval]
diversity_samples = 3
inpaint_items = 4
)";

fs::path write_config(const TempDir& d, const std::string& name, const char* text) {
    std::ofstream(d / name) << text;
    return d / name;
}

int run_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    if (err_text) *err_text = err.str();
    return code;
}

} // namespace

// ---------------------------------------------------------------------------
// Config grammar

TEST(Config, ParsesSectionsCommentsAndTypes) {
    const Schema s = small_schema();
    Config c(s);
    c.merge_text("# top comment\n[a]\n n = 42   # trailing\nx=-1.5e-3\nflag = true\n\n[b]\nname = \"two # words\"\nlist = 0.1, 0.2 ,3\n");
    EXPECT_EQ(c.get_int("a.n"), 42);
    EXPECT_DOUBLE_EQ(c.get_real("a.x"), -1.5e-3);
    EXPECT_TRUE(c.get_bool("a.flag"));
    EXPECT_EQ(c.get_string("b.name"), "two # words");
    EXPECT_EQ(c.get_reals("b.list"), (std::vector<double>{0.1, 0.2, 3.0}));
}

TEST(Config, DefaultsApplyUntilSet) {
    const Schema s = small_schema();
    Config c(s);
    EXPECT_EQ(c.get_int("a.n"), 1);
    EXPECT_EQ(c.get_reals("b.list"), (std::vector<double>{1.0, 2.0}));
    c.apply_override("a.n=7");
    EXPECT_EQ(c.get_int("a.n"), 7);
}

TEST(Config, RejectsUnknownKeysWithLocation) {
    const Schema s = small_schema();
    Config c(s);
    try {
        c.merge_text("[a]\nn = 1\nnope = 2\n", "f.conf");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("f.conf:3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("a.nope"), std::string::npos);
    }
    EXPECT_THROW(c.apply_override("zz.top=1"), ConfigError);
}

TEST(Config, RejectsMalformedInput) {
    const Schema s = small_schema();
    Config c(s);
    EXPECT_THROW(c.merge_text("n = 1\n"), ConfigError);         // outside a section
    EXPECT_THROW(c.merge_text("[a\nn = 1\n"), ConfigError);     // bad header
    EXPECT_THROW(c.merge_text("[a]\nn 1\n"), ConfigError);      // no '='
    EXPECT_THROW(c.merge_text("[a]\nn = 1.5\n"), ConfigError);  // not an integer
    EXPECT_THROW(c.merge_text("[a]\nx = fast\n"), ConfigError);
    EXPECT_THROW(c.merge_text("[a]\nflag = yes\n"), ConfigError);
    EXPECT_THROW(c.merge_text("[b]\nlist = 1,,2\n"), ConfigError);
    EXPECT_THROW(c.apply_override("a.n"), ConfigError);
}

TEST(Config, ResolvedTextRoundTrips) {
    const Schema s = small_schema();
    Config c(s);
    c.merge_text("[a]\nn = 9\n[b]\nname = x y\n");
    Config back(s);
    back.merge_text(c.resolved());
    EXPECT_EQ(back.resolved(), c.resolved());
    EXPECT_EQ(back.get_string("b.name"), "x y");
}

TEST(Config, CountsMustBeNonNegative) {
    const Schema s = small_schema();
    Config c(s);
    c.set("a.n", "-3");
    EXPECT_THROW(c.get_count("a.n"), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
    for (const char* name : {"mixture2d.conf", "toytts.conf"}) {
        Config c(experiment_schema());
        EXPECT_NO_THROW(c.merge_text(slurp(fs::path(E1_SOURCE_DIR) / "configs" / name), name)) << name;
    }
}

// ---------------------------------------------------------------------------
// SVG

TEST(Svg, LinePlotIsWellFormed) {
    Plot p("loss <curve> & more", "step", "loss");
    p.add({"a", {1, 2, 3}, {3, 2, 1}}).add({"b\"q", {1, 2}, {0.5, 0.25}});
    const std::string doc = p.str();
    EXPECT_EQ(doc.rfind("<?xml", 0), 0u);
    EXPECT_NE(doc.find("version=\"1.1\""), std::string::npos);
    EXPECT_NE(doc.find("&lt;curve&gt; &amp; more"), std::string::npos);
    EXPECT_EQ(std::count(doc.begin(), doc.end(), '\n') > 10, true);
    EXPECT_TRUE(balanced_xml(doc));
    EXPECT_EQ(std::count(doc.begin(), doc.end(), 'p') > 0, true);
}

TEST(Svg, ScatterLogAndDegenerateInputs) {
    Plot empty("nothing", "x", "y", Plot::Kind::points);
    EXPECT_TRUE(balanced_xml(empty.str()));
    Plot single("one", "x", "y", Plot::Kind::points);
    single.add({"p", {1.0}, {1.0}});
    EXPECT_TRUE(balanced_xml(single.str()));
    Plot logp("log", "x", "y");
    logp.add({"l", {1, 2, 3}, {0.0, 1e-3, 10.0}}).log_y();
    const std::string doc = logp.str();
    EXPECT_TRUE(balanced_xml(doc));
    EXPECT_EQ(doc.find("nan"), std::string::npos);
    EXPECT_EQ(doc.find("inf"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, MissingConfigPrintsUsageAndExitsOne) {
    std::string err;
    EXPECT_EQ(run_cli({"train-teacher"}, &err), 1);
    EXPECT_NE(err.find("usage: e1tts"), std::string::npos);
    EXPECT_EQ(run_cli({}, &err), 1);
    EXPECT_EQ(run_cli({"fly", "x.conf"}, &err), 1);
    EXPECT_EQ(run_cli({"sample", "does-not-exist.conf"}, &err), 1);
}

TEST(Cli, ValidationErrorsExitOne) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    std::string err;
    EXPECT_EQ(run_cli({"train-teacher", cfg.string(), "--out", (d / "o").string(), "mlp.width=3"}, &err), 1);
    EXPECT_NE(err.find("mlp.width"), std::string::npos);
    EXPECT_EQ(run_cli({"train-teacher", cfg.string(), "--bogus"}, &err), 1);
    EXPECT_EQ(run_cli({"sample", cfg.string(), "--out", (d / "s").string()}, &err), 1);  // no checkpoint
    EXPECT_EQ(run_cli({"inpaint", cfg.string(), "--checkpoint", "x", "--out", (d / "i").string()}, &err), 1);
}

TEST(Cli, CheckpointVersionMismatchExitsTwoWithBothVersions) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    nn::ParamStore p;
    p.add("teacher/w", RealArray::scalar(1.0));
    std::ofstream(d / "old.e1ck", std::ios::binary) << nn::encode_checkpoint(p, 9);
    std::string err;
    EXPECT_EQ(run_cli({"sample", cfg.string(), "--checkpoint", (d / "old.e1ck").string(), "--out", (d / "s").string()}, &err), 2);
    EXPECT_NE(err.find("9"), std::string::npos);
    EXPECT_NE(err.find(std::to_string(nn::kCheckpointVersion)), std::string::npos);
}

TEST(Cli, CorruptCheckpointExitsTwo) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    std::ofstream(d / "junk.e1ck", std::ios::binary) << "not a checkpoint";
    std::string err;
    EXPECT_EQ(run_cli({"sample", cfg.string(), "--checkpoint", (d / "junk.e1ck").string(), "--out", (d / "s").string()}, &err), 2);
    EXPECT_NE(err.find("magic"), std::string::npos);
}

TEST(Cli, MixturePipelineIsDeterministicAndSelfDescribing) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    for (const char* run_name : {"r1", "r2"}) {
        const fs::path root = d / run_name;
        ASSERT_EQ(run_cli({"train-teacher", cfg.string(), "--out", (root / "t").string()}), 0);
        ASSERT_EQ(run_cli({"distill", cfg.string(), "--checkpoint", (root / "t" / "teacher.e1ck").string(), "--out",
                           (root / "d").string()}),
                  0);
        ASSERT_EQ(run_cli({"sample", cfg.string(), "--steps", "1", "--checkpoint", (root / "d" / "student.e1ck").string(),
                           "--out", (root / "s").string()}),
                  0);
    }
    for (const char* f : {"t/metrics.csv", "d/metrics.csv", "s/summary.csv", "s/samples.csv", "t/teacher.e1ck"})
        EXPECT_EQ(slurp(d / "r1" / f), slurp(d / "r2" / f)) << f;

    const std::string metrics = slurp(d / "r1" / "t" / "metrics.csv");
    EXPECT_EQ(metrics.rfind("step,phase,loss,grad_norm,wall_ms\n", 0), 0u);
    EXPECT_NE(metrics.find("30,teacher,"), std::string::npos);
    const std::string resolved = slurp(d / "r1" / "d" / "config.resolved");
    EXPECT_NE(resolved.find("checkpoint_format_version = 1"), std::string::npos);
    EXPECT_NE(resolved.find("task = \"mixture2d\""), std::string::npos);
    for (const char* svg : {"t/loss.svg", "t/samples.svg", "d/loss.svg", "s/samples.svg"})
        EXPECT_TRUE(balanced_xml(slurp(d / "r1" / svg))) << svg;
    EXPECT_NE(slurp(d / "r1" / "s" / "summary.csv").find("model,student"), std::string::npos);
}

TEST(Cli, TeacherCheckpointGivesIdenticalSamplesAfterDistill) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    ASSERT_EQ(run_cli({"train-teacher", cfg.string(), "--out", (d / "t").string()}), 0);
    ASSERT_EQ(run_cli({"distill", cfg.string(), "--checkpoint", (d / "t/teacher.e1ck").string(), "--out", (d / "d").string()}), 0);
    // several steps means the teacher is used, whichever checkpoint holds it
    ASSERT_EQ(run_cli({"sample", cfg.string(), "--checkpoint", (d / "t/teacher.e1ck").string(), "--out", (d / "a").string()}), 0);
    ASSERT_EQ(run_cli({"sample", cfg.string(), "--checkpoint", (d / "d/student.e1ck").string(), "--out", (d / "b").string()}), 0);
    EXPECT_EQ(slurp(d / "a/samples.csv"), slurp(d / "b/samples.csv"));
}

TEST(Cli, WallClockIsZeroUnlessRequested) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    ASSERT_EQ(run_cli({"train-teacher", cfg.string(), "--out", (d / "a").string(), "run.wall_clock=true"}), 0);
    std::istringstream rows(slurp(d / "a/metrics.csv"));
    std::string line;
    std::getline(rows, line);
    bool any_positive = false;
    while (std::getline(rows, line)) any_positive = any_positive || std::stod(line.substr(line.rfind(',') + 1)) > 0.0;
    EXPECT_TRUE(any_positive);
}

TEST(Cli, OutputRootFromEnvironment) {
    TempDir d;
    const auto cfg = write_config(d, "m.conf", kTinyMixture);
    ::setenv("E1_OUT_DIR", (d / "root").c_str(), 1);
    const int code = run_cli({"train-teacher", cfg.string(), "train.steps=5"});
    ::unsetenv("E1_OUT_DIR");
    ASSERT_EQ(code, 0);
    EXPECT_TRUE(fs::exists(d / "root" / "train-teacher" / "teacher.e1ck"));
    EXPECT_TRUE(fs::exists(d / "root" / "train-teacher" / "config.resolved"));
}

TEST(Cli, ToyttsSubcommandsRunEndToEnd) {
    TempDir d;
    const auto cfg = write_config(d, "t.conf", kTinyToy);
    const std::string c = cfg.string();
    ASSERT_EQ(run_cli({"train-teacher", c, "--out", (d / "t").string()}), 0);
    ASSERT_EQ(run_cli({"distill", c, "--checkpoint", (d / "t/teacher.e1ck").string(), "--out", (d / "d").string()}), 0);
    const std::string student = (d / "d/student.e1ck").string();
    ASSERT_EQ(run_cli({"sample", c, "--steps", "1", "--checkpoint", student, "--out", (d / "s").string()}), 0);
    ASSERT_EQ(run_cli({"inpaint", c, "--checkpoint", student, "--out", (d / "i").string()}), 0);
    ASSERT_EQ(run_cli({"eval-sweep", c, "--checkpoint", student, "--out", (d / "w").string()}), 0);
    ASSERT_EQ(run_cli({"eval-diversity", c, "--checkpoint", student, "--out", (d / "v").string()}), 0);

    const std::string sweep = slurp(d / "w/sweep.csv");
    EXPECT_EQ(sweep.rfind("factor,token_error_rate,mean_total\n", 0), 0u);
    EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 6);
    EXPECT_TRUE(balanced_xml(slurp(d / "w/sweep.svg")));
    const std::string div = slurp(d / "v/diversity.csv");
    EXPECT_NE(div.find("teacher,2,"), std::string::npos);
    EXPECT_NE(div.find("student,1,"), std::string::npos);
    EXPECT_NE(slurp(d / "i/summary.csv").find("context_mismatches,0"), std::string::npos);

    std::ifstream data(d / "t/test.dataset");
    const auto file = toytts::read_dataset(data);
    EXPECT_EQ(file.utterances.size(), 6u);
}

TEST(Cli, SelftestPasses) {
    TempDir d;
    std::ostringstream out, err;
    EXPECT_EQ(run({"selftest", "--out", (d / "st").string()}, out, err), 0) << out.str() << err.str();
    EXPECT_EQ(out.str().find("FAIL"), std::string::npos);
    EXPECT_NE(slurp(d / "st/selftest.csv").find("PASS"), std::string::npos);
}
