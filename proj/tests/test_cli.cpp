#include "dataiq/cli.hpp"
#include "dataiq/data.hpp"
#include "dataiq/report.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <regex>
#include <sstream>

using namespace dataiq;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err, cli::RunOptions{true});
    return {code, out.str(), err.str()};
}

std::string write_fixture(const TempDir& dir, double collision = 0.3)
{
    const auto pd = generate_collision_dataset(300, 3, collision, 0.05, 5);
    const auto path = (dir / "d.csv").string();
    write_dataset(path, pd.data, "y");
    return path;
}

std::vector<std::string> csv_lines(const std::string& text)
{
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("sha256 digest")
{
    CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("characterize twice is byte-identical")
{
    TempDir dir;
    const auto data = write_fixture(dir);
    for (const char* out : {"a", "b"}) {
        const auto r = run_cli({"characterize", "--data", data, "--target", "y", "--model", "gbdt", "--rounds", "10",
                                "--seed", "7", "--out", (dir / out).string()});
        REQUIRE(r.code == 0);
    }
    CHECK(read_file(dir / "a" / "report.json") == read_file(dir / "b" / "report.json"));
    CHECK(read_file(dir / "a" / "metrics.csv") == read_file(dir / "b" / "metrics.csv"));
    const Report rep = read_report(dir / "a" / "report.json");
    CHECK(rep.meta["seed"] == 7);
    CHECK(rep.meta["manifest"]["command"] == "characterize");
    CHECK(rep.meta["manifest"]["inputs"].contains(data));
}

TEST_CASE("characterize from an external dynamics log")
{
    TempDir dir;
    const std::string log =
        "example_id,checkpoint,label,p_0,p_1\n"
        "0,0,0,0.9,0.1\n1,0,1,0.5,0.5\n2,0,1,0.8,0.2\n"
        "0,1,0,0.95,0.05\n1,1,1,0.5,0.5\n2,1,1,0.9,0.1\n";
    write_file_atomic(dir / "log.csv", log);
    const auto r = run_cli({"characterize", "--dynamics", (dir / "log.csv").string(), "--out", (dir / "o").string()});
    REQUIRE(r.code == 0);
    const Report rep = read_report(dir / "o" / "report.json");
    CHECK(rep.meta["source"] == "external dynamics");
    CHECK(!rep.meta.contains("model"));
    CHECK(rep.metrics->size() == 3);
}

TEST_CASE("plot points lie inside the envelope")
{
    TempDir dir;
    const auto data = write_fixture(dir);
    const auto r = run_cli({"characterize", "--data", data, "--target", "y", "--epochs", "5", "--plot", "--out",
                            (dir / "o").string()});
    REQUIRE(r.code == 0);
    const Report rep = read_report(dir / "o" / "report.json");
    const auto& m = *rep.metrics;
    for (Index i = 0; i < m.size(); ++i)
        CHECK(m.aleatoric[i] <= m.confidence[i] * (1 - m.confidence[i]) + 1e-9);
    const auto svg = read_file(dir / "o" / "characterization.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    const std::regex circle("<circle cx=\"[0-9.]+\" cy=\"[0-9.]+\" r=\"2\"");
    const auto n = std::distance(std::sregex_iterator(svg.begin(), svg.end(), circle), std::sregex_iterator());
    CHECK(n == m.size());
}

TEST_CASE("infer with one neighbour reproduces training flags")
{
    TempDir dir;
    const auto data = write_fixture(dir, 0.0);
    REQUIRE(run_cli({"characterize", "--data", data, "--target", "y", "--epochs", "5", "--split", "1,0,0", "--out",
                     (dir / "c").string()})
                .code == 0);
    const auto r = run_cli({"infer", "--index", (dir / "c" / "report.json").string(), "--data", data, "--knn", "1",
                            "--out", (dir / "i").string()});
    REQUIRE(r.code == 0);
    const Report rep = read_report(dir / "c" / "report.json");
    const auto lines = csv_lines(read_file(dir / "i" / "flags.csv"));
    REQUIRE(lines.size() == rep.groups->groups.size() + 1);
    for (std::size_t i = 0; i < rep.groups->groups.size(); ++i) {
        const bool amb = rep.groups->groups[i] == Group::Ambiguous;
        CHECK(lines[i + 1] == std::to_string(i) + (amb ? ",Ambiguous" : ",Other"));
    }
}

TEST_CASE("defer writes a ten point curve")
{
    TempDir dir;
    const auto data = write_fixture(dir);
    REQUIRE(run_cli({"characterize", "--data", data, "--target", "y", "--epochs", "5", "--out", (dir / "c").string()})
                .code == 0);
    const auto r = run_cli({"defer", "--report", (dir / "c" / "report.json").string(), "--subset", "ambiguous",
                            "--out", (dir / "d").string()});
    REQUIRE(r.code == 0);
    const auto lines = csv_lines(read_file(dir / "d" / "deferral.csv"));
    REQUIRE(lines.size() == 11);
    CHECK(lines[0] == "tau,kept,accuracy");
    CHECK(lines[1].rfind("0.1,", 0) == 0);
    CHECK(lines[10].rfind("1,", 0) == 0);
}

TEST_CASE("compare ranks by easy fraction")
{
    TempDir dir;
    auto make = [&](const std::string& name, int easy) {
        Report r;
        GroupAssignment g;
        for (int i = 0; i < 100; ++i) g.groups.push_back(i < easy ? Group::Easy : Group::Ambiguous);
        r.groups = g;
        write_report(dir / (name + ".json"), r);
        return (dir / (name + ".json")).string();
    };
    const auto a = make("V1", 63);
    const auto b = make("V2", 30);
    const auto r = run_cli({"compare", b, a, "--out", (dir / "o").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Rank 1 (63% Easy): V1") != std::string::npos);
    CHECK(r.out.find("Rank 2 (30% Easy): V2") != std::string::npos);
}

TEST_CASE("exit codes")
{
    TempDir dir;
    CHECK(run_cli({"characterize", "--bogus"}).code == cli::input_error);
    CHECK(run_cli({"characterize", "--data", (dir / "missing.csv").string(), "--out", (dir / "o").string()}).code ==
          cli::input_error);
    CHECK(run_cli({}).code == cli::input_error);
    const auto data = write_fixture(dir);
    CHECK(run_cli({"characterize", "--data", data, "--target", "nope", "--out", (dir / "o").string()}).code ==
          cli::input_error);
    CHECK(run_cli({"characterize", "--data", data, "--target", "y", "--cup", "0.2", "--clow", "0.4", "--out",
                   (dir / "o").string()})
              .code == cli::input_error);

    // Huge features with a huge step overflow the network.
    auto pd = generate_collision_dataset(100, 2, 0.0, 0.0, 1);
    pd.data.features *= 1e150;
    write_dataset(dir / "big.csv", pd.data, "y");
    const auto r = run_cli({"characterize", "--data", (dir / "big.csv").string(), "--target", "y", "--lr", "1e10",
                            "--out", (dir / "o").string()});
    CHECK(r.code == cli::numeric_error);
    CHECK(r.err.find("checkpoint") != std::string::npos);
}

TEST_CASE("rerun reproduces a report")
{
    TempDir dir;
    const auto data = write_fixture(dir);
    REQUIRE(run_cli({"sweep", "--data", data, "--target", "y", "--epochs", "3", "--specs", "mlp:8;logistic", "--out",
                     (dir / "a").string()})
                .code == 0);
    REQUIRE(run_cli({"rerun", "--report", (dir / "a" / "report.json").string(), "--out", (dir / "b").string()}).code ==
            0);
    CHECK(read_file(dir / "a" / "report.json") == read_file(dir / "b" / "report.json"));
}

TEST_CASE("help exits cleanly")
{
    const auto r = run_cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("characterize") != std::string::npos);
}
