#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "fixtures.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/surrogate.hpp"

namespace fs = std::filesystem;
using namespace voltvar;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "voltvar");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text)
{
    std::ofstream(p, std::ios::binary) << text;
}

/// Fresh scratch directory per test case.
fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("voltvar_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kSingleLines = "from,to,r_pu,x_pu\n0,1,0.1,0.2\n";
const char* kSingleBuses = "id,kind,p_pu,q_pu,qmin_pu,qmax_pu,vmin_pu,vmax_pu\n"
                           "0,substation,0,0,,,,\n"
                           "1,generator,-0.3,0,-0.4,0.4,0.95,1.05\n";

} // namespace

TEST_CASE("build on a single line")
{
    const fs::path dir = scratch("build");
    spit(dir / "lines.csv", kSingleLines);
    spit(dir / "buses.csv", kSingleBuses);
    const std::vector<std::string> args = {"build", "--feeder", (dir / "lines.csv").string(), "--buses",
                                           (dir / "buses.csv").string(), "--out", dir.string()};
    const Run r = run(args);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("||X|| = 0.2") != std::string::npos);
    const SensitivityModel s = sensitivity_from_json(slurp(dir / "sensitivity.json"));
    CHECK(s.x.rows() == 1);
    CHECK(s.x(0, 0) == doctest::Approx(0.2).epsilon(1e-14));

    const std::string first = slurp(dir / "sensitivity.json");
    CHECK(run(args).code == 0);
    CHECK(slurp(dir / "sensitivity.json") == first);
}

TEST_CASE("input errors exit with code 2 and name the problem")
{
    const fs::path dir = scratch("bad");
    spit(dir / "lines.csv", "from,to,resistance,x_pu\n0,1,0.1,0.2\n");
    spit(dir / "buses.csv", kSingleBuses);
    const Run bad = run({"build", "--feeder", (dir / "lines.csv").string(), "--buses", (dir / "buses.csv").string(),
                         "--out", dir.string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("r_pu") != std::string::npos);
    CHECK(!fs::exists(dir / "sensitivity.json"));

    CHECK(run({"build", "--out", dir.string()}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"report", "--out", (dir / "missing").string()}).code == 2);

    spit(dir / "bad.cfg", "epochs = 10\nwhatever = 3\n");
    const Run cfg = run({"synth-feeder", "--config", (dir / "bad.cfg").string(), "--out", dir.string()});
    CHECK(cfg.code == 2);
    CHECK(cfg.err.find("whatever") != std::string::npos);
}

TEST_CASE("report on a directory without artifacts is an error")
{
    const fs::path dir = scratch("empty");
    const Run r = run({"report", "--out", dir.string()});
    CHECK(r.code == 2);
    CHECK(!fs::exists(dir / "report.md"));
}

TEST_CASE("labelling zero scenarios writes header-only tables")
{
    const fs::path dir = scratch("zero");
    spit(dir / "lines.csv", kSingleLines);
    spit(dir / "buses.csv", kSingleBuses);
    const std::vector<std::string> args = {"label", "--feeder", (dir / "lines.csv").string(), "--buses",
                                           (dir / "buses.csv").string(), "--out", dir.string(),
                                           "--samples-per-step", "0", "--steps", "10"};
    REQUIRE(run(args).code == 0);
    CHECK(slurp(dir / "scenarios.csv") == "id,step,bus,p_pu,q_pu,qinit_pu\n");
    CHECK(slurp(dir / "orpf_labels.csv") == "scenario_id,bus_id,q_star_pu,objective,status\n");
    CHECK(slurp(dir / "dataset_1.csv") == "v_pu,q_pu,qstar_pu\n");
    REQUIRE(run(args).code == 0);
    CHECK(slurp(dir / "scenarios.csv") == "id,step,bus,p_pu,q_pu,qinit_pu\n");
}

TEST_CASE("certify refuses an uncertified surrogate")
{
    const fs::path dir = scratch("certify");
    spit(dir / "lines.csv", kSingleLines);
    spit(dir / "buses.csv", kSingleBuses);
    REQUIRE(run({"build", "--feeder", (dir / "lines.csv").string(), "--buses", (dir / "buses.csv").string(), "--out",
                 dir.string()})
                .code
            == 0);
    SurrogateSet set;
    set.regime = Regime::cvp_sc;
    set.nodes.push_back({1, make_affine(0.9), make_affine(5.0, 1.0), -0.4, 0.4});
    spit(dir / "steep.json", surrogate_to_json(set));
    const Run r = run({"certify", "--surrogate", (dir / "steep.json").string(), "--sensitivity",
                       (dir / "sensitivity.json").string(), "--out", dir.string()});
    CHECK(r.code == 1);
    const auto j = nlohmann::json::parse(slurp(dir / "certificate_cvpsc.json"));
    CHECK(j.at("valid").get<bool>() == false);
    CHECK(j.at("eps_max").get<double>() == 0.0);
}

TEST_CASE("full pipeline on the synthetic feeder")
{
    const fs::path dir = scratch("pipeline");
    const std::string out = dir.string();
    const std::string lines = (dir / "lines.csv").string(), buses = (dir / "buses.csv").string();
    REQUIRE(run({"synth-feeder", "--out", out, "--seed", "3"}).code == 0);
    REQUIRE(run({"synth-profiles", "--feeder", lines, "--buses", buses, "--out", out, "--steps", "48"}).code == 0);
    REQUIRE(run({"build", "--feeder", lines, "--buses", buses, "--out", out}).code == 0);
    const std::string prof = (dir / "profiles.csv").string();
    const Run label = run({"label", "--feeder", lines, "--buses", buses, "--out", out, "--profiles", prof});
    REQUIRE(label.code == 0);
    CHECK(label.out.rfind("240 scenarios", 0) == 0);

    for (const std::string regime : {"cvpsc", "rpsc"}) {
        REQUIRE(run({"train", "--feeder", lines, "--buses", buses, "--out", out, "--regime", regime, "--epochs", "150"})
                    .code
                == 0);
        REQUIRE(run({"train", "--feeder", lines, "--buses", buses, "--out", out, "--regime", regime, "--epochs", "150",
                     "--baseline"})
                    .code
                == 0);
        const std::string sur = (dir / ("surrogate_" + regime + ".json")).string();
        CHECK(run({"certify", "--surrogate", sur, "--sensitivity", (dir / "sensitivity.json").string(), "--out", out})
                  .code
              == 0);
        for (const std::string plant : {"linear", "ac"}) {
            const Run sim = run({"simulate", "--feeder", lines, "--buses", buses, "--out", out, "--surrogate", sur,
                                 "--plant", plant, "--profiles", prof, "--profile-step", "30"});
            CHECK(sim.code == 0);
            CHECK(fs::exists(dir / ("trace_" + regime + "_" + plant + ".csv")));
        }
        const auto log = slurp(dir / ("train_log_" + regime + ".jsonl"));
        const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
        for (const char* key : {"epoch", "node", "loss", "lipschitz_psi", "lipschitz_phi"})
            CHECK(first.contains(key));
    }
    const Run tv = run({"simulate", "--feeder", lines, "--buses", buses, "--out", out, "--surrogate",
                        (dir / "surrogate_rpsc.json").string(), "--profiles", prof, "--steps-per-change", "20",
                        "--eps", "0.1"});
    CHECK(tv.code == 0);

    REQUIRE(run({"report", "--out", out}).code == 0);
    const std::string report = slurp(dir / "report.md");
    CHECK(report.find("Training loss") != std::string::npos);
    CHECK(fs::exists(dir / "convergence_cvpsc_ac.csv"));

    // Improvement column recomputed from the per-run summaries.
    std::istringstream csv(slurp(dir / "report_training.csv"));
    std::string row;
    std::getline(csv, row);
    CHECK(row == "regime,loss,baseline_loss,improvement");
    int rows = 0;
    while (std::getline(csv, row)) {
        ++rows;
        std::vector<std::string> cells;
        std::stringstream ss(row);
        for (std::string c; std::getline(ss, c, ',');)
            cells.push_back(c);
        REQUIRE(cells.size() == 4);
        const double loss = nlohmann::json::parse(slurp(dir / ("train_summary_" + cells[0] + ".json"))).at("loss");
        const double base =
            nlohmann::json::parse(slurp(dir / ("train_summary_" + cells[0] + "_baseline.json"))).at("loss");
        CHECK(std::stod(cells[1]) == loss);
        CHECK(std::stod(cells[2]) == base);
        CHECK(std::stod(cells[3]) == doctest::Approx((base - loss) / base).epsilon(1e-12));
    }
    CHECK(rows == 2);

    // Regenerating the report is byte-identical.
    const std::string before = slurp(dir / "report_training.csv") + report;
    REQUIRE(run({"report", "--out", out}).code == 0);
    CHECK(slurp(dir / "report_training.csv") + slurp(dir / "report.md") == before);
}
