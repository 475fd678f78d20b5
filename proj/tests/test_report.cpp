#include "fspc/config.hpp"
#include "fspc/report.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace fspc;

namespace {

std::filesystem::path write_run(const std::filesystem::path& root, const std::string& name, const std::string& setting,
                                std::vector<double> accs) {
  TrainConfig cfg = desk_profile();
  cfg.model = ablation_model(cfg.model, setting);
  RunReport r = summarize(std::move(accs));
  r.config = to_json(cfg);
  const auto dir = root / name;
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << to_json(r).dump();
  return dir;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Settings, LabelsRoundTrip) {
  const ModelConfig base;
  for (const char* s : kAblationSettings) EXPECT_EQ(setting_label(ablation_model(base, s)), s);
  ModelConfig off;
  off.cia.sci = off.cia.cif = false;
  EXPECT_EQ(setting_label(off), "ProtoNet");
  EXPECT_THROW(ablation_model(base, "+XYZ"), Error);
}

TEST(Table, AblationRowsComeOutInTableOrder) {
  TempDir dir("report");
  std::vector<std::filesystem::path> runs{
      write_run(dir.path(), "d", "+CIA", {0.9, 0.8}), write_run(dir.path(), "a", "+CIF", {0.7, 0.7}),
      write_run(dir.path(), "c", "ProtoNet", {0.6, 0.5}), write_run(dir.path(), "b", "+SCI", {0.65, 0.6})};
  const auto rows = collect_rows(runs);
  ASSERT_EQ(rows.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(rows[static_cast<std::size_t>(i)].setting, kAblationSettings[i]);
  const auto csv = lines(table_csv(rows));
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], "setting,backbone,n_way,k_shot,mean_accuracy_pct,ci95_pct,run");
  EXPECT_EQ(lines(table_text(rows)).size(), 6u);
}

TEST(Table, NumbersMatchReportFiles) {
  TempDir dir("report");
  const std::vector<std::filesystem::path> runs{write_run(dir.path(), "r", "+CIA", {0.8125, 0.5, 1.0})};
  const auto rows = collect_rows(runs);
  ASSERT_EQ(rows.size(), 1u);
  std::ifstream in(runs[0] / "report.json");
  const RunReport r = run_report_from_json(nlohmann::json::parse(in));
  char want[64];
  std::snprintf(want, sizeof want, "+CIA,dgcnn,5,1,%.2f,%.2f,r", 100 * r.mean_accuracy, 100 * r.ci95_halfwidth);
  EXPECT_EQ(lines(table_csv(rows))[1], want);
  EXPECT_NE(table_text(rows).find("77.08 +/- "), std::string::npos);
}

TEST(Table, MissingOrCorruptReport) {
  TempDir dir("report");
  const std::vector<std::filesystem::path> missing{dir.path() / "none"};
  EXPECT_THROW(collect_rows(missing), Error);
  std::filesystem::create_directories(dir.path() / "bad");
  std::ofstream(dir.path() / "bad" / "report.json") << "{not json";
  const std::vector<std::filesystem::path> bad{dir.path() / "bad"};
  EXPECT_THROW(collect_rows(bad), Error);
}

TEST(Curves, OnePolylinePerSeries) {
  const std::vector<HistoryRow> rows{{0, 1e-3, 0.5, 0.6, 0.7}, {1, 1e-3, 0.3, 0.8, 0.75}};
  const std::string svg = history_svg(rows);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t count = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
  EXPECT_EQ(count, 3u);
}
