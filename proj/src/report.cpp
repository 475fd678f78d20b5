#include "fspc/report.hpp"

#include "fspc/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fspc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int setting_rank(const std::string& s) {
  for (int i = 0; i < 4; ++i) {
    if (s == kAblationSettings[i]) return i;
  }
  return 4;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string polyline(std::span<const HistoryRow> rows, double (*get)(const HistoryRow&), double lo, double hi,
                     double x0, double y0, double w, double h) {
  std::ostringstream pts;
  const double span_x = rows.size() > 1 ? static_cast<double>(rows.size() - 1) : 1.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = get(rows[i]);
    if (!std::isfinite(v)) continue;
    const double x = x0 + w * static_cast<double>(i) / span_x;
    const double y = y0 + h - h * (v - lo) / (hi - lo);
    pts << fixed2(x) << ',' << fixed2(y) << ' ';
  }
  return pts.str();
}

}  // namespace

std::string setting_label(const ModelConfig& config) {
  if (!config.with_cia || (!config.cia.sci && !config.cia.cif)) return "ProtoNet";
  if (config.cia.sci && config.cia.cif) return "+CIA";
  return config.cia.sci ? "+SCI" : "+CIF";
}

ModelConfig ablation_model(const ModelConfig& base, const std::string& setting) {
  ModelConfig c = base;
  switch (setting_rank(setting)) {
    case 0: c.with_cia = false; c.cia.sci = false; c.cia.cif = false; break;
    case 1: c.with_cia = true; c.cia.sci = true; c.cia.cif = false; break;
    case 2: c.with_cia = true; c.cia.sci = false; c.cia.cif = true; break;
    case 3: c.with_cia = true; c.cia.sci = true; c.cia.cif = true; break;
    default: throw_usage("unknown ablation setting: " + setting);
  }
  return c;
}

std::vector<TableRow> collect_rows(std::span<const fs::path> run_dirs) {
  std::vector<TableRow> rows;
  for (const fs::path& dir : run_dirs) {
    std::ifstream in(dir / "report.json");
    if (!in) throw_data("report not found: " + (dir / "report.json").string());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw_data("malformed report " + (dir / "report.json").string() + ": " + e.what());
    }
    TableRow r;
    r.run = dir.filename().string();
    const json cfg_doc = doc.value("config", json::object());
    double mean = 0.0;
    double ci = 0.0;
    if (doc.contains("aggregate_mean_accuracy")) {
      mean = doc.at("aggregate_mean_accuracy").get<double>();
    } else {
      const RunReport rep = run_report_from_json(doc);
      mean = rep.mean_accuracy;
      ci = rep.ci95_halfwidth;
    }
    const TrainConfig cfg = train_config_from_json(cfg_doc);
    r.setting = setting_label(cfg.model);
    r.backbone = std::string(to_string(cfg.model.backbone.kind));
    r.n_way = cfg.episode.n_way;
    r.k_shot = cfg.episode.k_shot;
    r.mean_pct = 100.0 * mean;
    r.ci95_pct = 100.0 * ci;
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) {
    if (a.backbone != b.backbone) return a.backbone < b.backbone;
    if (a.n_way != b.n_way) return a.n_way < b.n_way;
    if (a.k_shot != b.k_shot) return a.k_shot < b.k_shot;
    return setting_rank(a.setting) < setting_rank(b.setting);
  });
  return rows;
}

std::string table_csv(std::span<const TableRow> rows) {
  std::ostringstream out;
  out << "setting,backbone,n_way,k_shot,mean_accuracy_pct,ci95_pct,run\n";
  for (const auto& r : rows) {
    out << r.setting << ',' << r.backbone << ',' << r.n_way << ',' << r.k_shot << ',' << fixed2(r.mean_pct) << ','
        << fixed2(r.ci95_pct) << ',' << r.run << '\n';
  }
  return out.str();
}

std::string table_text(std::span<const TableRow> rows) {
  std::vector<std::vector<std::string>> cells{{"Setting", "Backbone", "Task", "Accuracy (%)", "Run"}};
  for (const auto& r : rows) {
    cells.push_back({r.setting, r.backbone, std::to_string(r.n_way) + "-way " + std::to_string(r.k_shot) + "-shot",
                     fixed2(r.mean_pct) + " +/- " + fixed2(r.ci95_pct), r.run});
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      out << cells[i][c];
      if (c + 1 < cells[i].size()) out << std::string(width[c] - cells[i][c].size() + 2, ' ');
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  return out.str();
}

std::string history_svg(std::span<const HistoryRow> rows) {
  constexpr double kW = 640, kH = 360, kPad = 50;
  const double pw = kW - 2 * kPad;
  const double ph = kH - 2 * kPad;
  double loss_hi = 1e-9;
  for (const auto& r : rows) {
    if (std::isfinite(r.train_loss)) loss_hi = std::max(loss_hi, r.train_loss);
  }
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#888\"/>\n"
      << "<text x=\"" << kPad << "\" y=\"30\" font-size=\"14\">training curves (" << rows.size()
      << " epochs)</text>\n"
      << "<text x=\"" << kPad << "\" y=\"" << kH - 15 << "\" font-size=\"12\">epoch</text>\n";
  struct Series {
    const char* name;
    const char* colour;
    double (*get)(const HistoryRow&);
    double hi;
  };
  const Series series[] = {
      {"train loss", "#d62728", [](const HistoryRow& r) { return r.train_loss; }, loss_hi},
      {"train acc", "#1f77b4", [](const HistoryRow& r) { return r.train_acc; }, 1.0},
      {"val acc", "#2ca02c", [](const HistoryRow& r) { return r.val_acc; }, 1.0},
  };
  int legend = 0;
  for (const Series& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.colour << "\" stroke-width=\"2\" points=\""
        << polyline(rows, s.get, 0.0, s.hi, kPad, kPad, pw, ph) << "\"/>\n"
        << "<text x=\"" << kW - kPad - 90 << "\" y=\"" << kPad + 15 + 15 * legend++ << "\" font-size=\"12\" fill=\""
        << s.colour << "\">" << s.name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace fspc
