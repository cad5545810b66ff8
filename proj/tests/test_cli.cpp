#include <doctest.h>
#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "support/scenario.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

class Cli {
 public:
  Cli() : dir_(fs::temp_directory_path() / "irec_cli_test") {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "config.json") << json{
        {"store", {{"path", "store.json"}, {"id_seed", 7}}},
        {"llm", {{"provider", "stub"}, {"fixtures", irec::testing::fixture_path("scenario").string()}}}};
  }
  ~Cli() { fs::remove_all(dir_); }

  const fs::path& dir() const { return dir_; }

  Run operator()(const std::string& args, const std::string& stdin_file = "") const {
    std::string cmd = std::string("'") + IREC_CLI_PATH + "' --config '" + (dir_ / "config.json").string() +
                      "' --epoch 1760000000 " + args + " 2>>'" + (dir_ / "stderr.txt").string() + "'";
    if (!stdin_file.empty()) cmd += " <'" + stdin_file + "'";
    Run run;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) run.out.append(buf.data(), n);
    const int raw = ::pclose(pipe);
    run.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return run;
  }

 private:
  fs::path dir_;
};

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("cli exit codes") {
  Cli cli;
  std::ofstream(cli.dir() / "empty.txt") << "  \n";
  CHECK(cli("capture " + quoted(cli.dir() / "empty.txt")).status == 2);
  CHECK(cli("capture", (cli.dir() / "empty.txt").string()).status == 2);
  CHECK(cli("import " + quoted(cli.dir() / "missing.jsonl")).status == 1);
  CHECK(cli("query ' '").status == 3);
  CHECK(cli("decisions accept dec-42").status == 1);
  CHECK(cli("no-such-command").status != 0);
  CHECK(cli("stats").status == 0);
}

TEST_CASE("cli capture, review, import and query") {
  Cli cli;
  const auto note = irec::testing::fixture_path("scenario/note.txt");
  const auto captured = cli("capture --json " + quoted(note));
  REQUIRE(captured.status == 0);
  const auto cap = json::parse(captured.out);
  const std::string card_id = cap.at("card").at("id");

  const auto listed = json::parse(cli("decisions list --json").out);
  REQUIRE(listed.at("decisions").size() == 1);
  const std::string dec = listed.at("decisions")[0].at("id");
  CHECK(cli("decisions accept " + dec).status == 0);
  CHECK(cli("decisions veto " + dec).status == 1);
  CHECK(json::parse(cli("decisions list --json").out).at("decisions").empty());
  CHECK(json::parse(cli("decisions list --all --json").out).at("decisions").size() == 1);

  const auto imported = cli("import --json " + quoted(irec::testing::fixture_path("scenario/distractor.jsonl")));
  REQUIRE(imported.status == 0);
  CHECK(json::parse(imported.out).at("imported") == 1);

  const auto stats = json::parse(cli("stats --json").out);
  CHECK(stats.at("cards") == 2);
  CHECK(stats.at("embedded_cards") == 2);

  const std::string q = std::string("query --json '") + irec::testing::kScenarioQuery + "'";
  const auto first = cli(q);
  REQUIRE(first.status == 0);
  const auto payload = json::parse(first.out);
  REQUIRE(payload.at("results").size() == 1);
  const auto& r = payload.at("results")[0];
  CHECK(r.at("card_id") == card_id);
  const double expected = 0.60 * r.at("relevance").get<double>() + 0.15 * r.at("access").get<double>() +
                          0.15 * r.at("temporal").get<double>() + 0.10 * r.at("diversity").get<double>();
  CHECK(std::abs(r.at("final_score").get<double>() - expected) <= 1e-12);

  CHECK(cli(q).out == first.out);
  const std::string human = std::string("query '") + irec::testing::kScenarioQuery + "'";
  const auto h1 = cli(human);
  CHECK(h1.out.find("1. " + card_id) != std::string::npos);
  CHECK(cli(human).out == h1.out);

  const auto loose = json::parse(cli(q + " --filter loose --mode review").out);
  CHECK(loose.at("mode") == "review");
  CHECK(loose.at("results").size() == 2);

  const auto opened = cli(human + " --open " + card_id);
  CHECK(opened.status == 0);
  CHECK(opened.out.find("access count 1") != std::string::npos);
  CHECK(cli(q + " --open nope").status == 1);

  std::ofstream(cli.dir() / "more.txt") << "Same trick for ∫ x³ e^(x⁴) dx.";
  CHECK(cli("append " + card_id, (cli.dir() / "more.txt").string()).status == 0);
  CHECK(cli("append nope extra").status == 1);
}

TEST_CASE("cli decision edits") {
  Cli cli;
  std::ofstream(cli.dir() / "note.txt") << "Sum a geometric series ||| ratio test first ||| Series, Convergence, Limits";
  REQUIRE(cli("capture " + quoted(cli.dir() / "note.txt")).status == 0);
  const auto listed = json::parse(cli("decisions list --json").out).at("decisions");
  REQUIRE(listed.size() == 3);
  const std::string a = listed[0].at("id"), b = listed[1].at("id"), c = listed[2].at("id");

  const auto created = json::parse(cli("decisions modify " + a + " --create Sequences --json").out);
  CHECK(created.at("decision").at("state") == "modified");
  const std::string parent = created.at("decision").at("applied_tag_id");
  const auto child = json::parse(cli("decisions modify " + b + " --create Tests --parent " + parent + " --json").out);
  CHECK(child.at("decision").at("outcome").at("parent_id") == parent);
  const auto rejected = json::parse(cli("decisions modify " + c + " --reject --json").out);
  CHECK(rejected.at("decision").at("outcome").at("action") == "reject");
  CHECK(json::parse(cli("stats --json").out).at("pending_decisions") == 0);
}

TEST_CASE("cli import tolerates malformed lines and queries an empty store") {
  Cli cli;
  const std::string q = std::string("query '") + irec::testing::kScenarioQuery + "'";
  const auto empty = cli(q);
  CHECK(empty.status == 0);
  CHECK(empty.out == "no results (provide-nothing)\n");

  std::ofstream(cli.dir() / "mixed.jsonl") << R"({"problem": "Integrate x e^x", "insight": "parts", "tags": ["Calculus/Parts"]})"
                                           << "\n{broken\n"
                                           << R"({"insight": "missing problem"})" << "\n";
  const auto report = cli("import --json --parallelism 2 " + quoted(cli.dir() / "mixed.jsonl"));
  CHECK(report.status == 0);
  const auto j = json::parse(report.out);
  CHECK(j.at("imported") == 1);
  CHECK(j.at("failed") == 2);
  const auto stats = json::parse(cli("stats --json").out);
  CHECK(stats.at("tags") == 2);
  CHECK(stats.at("edges") == 1);
}

TEST_CASE("cli accepted decisions show up as edges") {
  Cli cli;
  REQUIRE(cli("capture", irec::testing::fixture_path("scenario/note.txt").string()).status == 0);
  CHECK(json::parse(cli("stats --json").out).at("edges") == 0);
  const auto dec = json::parse(cli("decisions list --json").out).at("decisions")[0].at("id").get<std::string>();
  CHECK(cli("decisions accept " + dec).status == 0);
  const auto stats = json::parse(cli("stats --json").out);
  CHECK(stats.at("edges") == 1);
  CHECK(stats.at("tags") == 2);
}
