// Copyright 2026 The sslnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// CSV tables and self-contained SVG figures. All numbers are formatted with
// fixed precision so output bytes depend only on the input values.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "sslnas/error.hpp"
#include "sslnas/eval.hpp"

namespace sslnas {

namespace {

std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string file_token(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out.empty() ? "_" : out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string svg_open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w, 0) + "\" height=\"" + num(h, 0) +
         "\" viewBox=\"0 0 " + num(w, 0) + " " + num(h, 0) + "\" font-family=\"Helvetica,Arial,sans-serif\">\n";
}

std::string text(double x, double y, const std::string& s, int size = 11, const std::string& anchor = "middle",
                 const std::string& extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\"" + extra + ">" + escape_xml(s) + "</text>\n";
}

// Diverging blue-white-red scale over [-1, 1].
std::string diverging(double v) {
  v = std::clamp(v, -1.0, 1.0);
  int r, g, b;
  if (v >= 0.0) {
    r = 255;
    g = static_cast<int>(std::lround(255.0 * (1.0 - 0.75 * v)));
    b = static_cast<int>(std::lround(255.0 * (1.0 - 0.85 * v)));
  } else {
    r = static_cast<int>(std::lround(255.0 * (1.0 + 0.85 * v)));
    g = static_cast<int>(std::lround(255.0 * (1.0 + 0.6 * v)));
    b = 255;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string heatmap_svg(const CorrelationReport& r) {
  const auto d = static_cast<int>(r.datasets.size());
  const double cell = 56.0, left = 130.0, top = 40.0;
  const double w = left + cell * d + 20.0, h = top + cell * d + 110.0;
  std::string s = svg_open(w, h);
  s += text(w / 2, 22, "Spearman rank correlation of top-1 accuracy", 13);
  for (int i = 0; i < d; ++i) {
    s += text(left - 8, top + cell * i + cell / 2 + 4, r.datasets[static_cast<size_t>(i)], 11, "end");
    const double x = left + cell * i + cell / 2, y = top + cell * d + 10;
    s += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"11\" text-anchor=\"start\" transform=\"rotate(45 " +
         num(x) + " " + num(y) + ")\">" + escape_xml(r.datasets[static_cast<size_t>(i)]) + "</text>\n";
    for (int j = 0; j < d; ++j) {
      const double v = r.spearman(i, j);
      s += "<rect class=\"cell\" x=\"" + num(left + cell * j) + "\" y=\"" + num(top + cell * i) + "\" width=\"" +
           num(cell) + "\" height=\"" + num(cell) + "\" fill=\"" + diverging(v) + "\" stroke=\"#ffffff\"/>\n";
      s += text(left + cell * j + cell / 2, top + cell * i + cell / 2 + 4, num(v), 11);
    }
  }
  s += "</svg>\n";
  return s;
}

std::string scatter_svg(const std::string& a, const std::string& b, const std::vector<double>& xs,
                        const std::vector<double>& ys, double rho, double r) {
  const double w = 420.0, h = 360.0, l = 60.0, rm = 20.0, t = 40.0, bm = 50.0;
  auto [xmin_it, xmax_it] = std::minmax_element(xs.begin(), xs.end());
  auto [ymin_it, ymax_it] = std::minmax_element(ys.begin(), ys.end());
  double x0 = *xmin_it, x1 = *xmax_it, y0 = *ymin_it, y1 = *ymax_it;
  const double px = std::max(0.05 * (x1 - x0), 0.005), py = std::max(0.05 * (y1 - y0), 0.005);
  x0 -= px;
  x1 += px;
  y0 -= py;
  y1 += py;
  bool have_fit = true;
  RegressionFit fit;
  try {
    fit = fit_regression_ci(xs, ys);
  } catch (const Error&) {
    have_fit = false;
  }
  if (have_fit) {
    for (int k = 0; k <= 40; ++k) {
      const double x = *xmin_it + (*xmax_it - *xmin_it) * k / 40.0;
      y0 = std::min(y0, fit.predict(x) - fit.half_width(x));
      y1 = std::max(y1, fit.predict(x) + fit.half_width(x));
    }
  }
  auto sx = [&](double x) { return l + (x - x0) / (x1 - x0) * (w - l - rm); };
  auto sy = [&](double y) { return h - bm - (y - y0) / (y1 - y0) * (h - t - bm); };

  std::string s = svg_open(w, h);
  s += text(w / 2, 20, a + " vs " + b + "  (rho " + num(rho) + ", r " + num(r) + ")", 12);
  s += "<rect x=\"" + num(l) + "\" y=\"" + num(t) + "\" width=\"" + num(w - l - rm) + "\" height=\"" +
       num(h - t - bm) + "\" fill=\"none\" stroke=\"#444444\"/>\n";
  if (have_fit) {
    std::string upper, lower;
    for (int k = 0; k <= 40; ++k) {
      const double x = *xmin_it + (*xmax_it - *xmin_it) * k / 40.0;
      upper += num(sx(x)) + "," + num(sy(fit.predict(x) + fit.half_width(x))) + " ";
    }
    for (int k = 40; k >= 0; --k) {
      const double x = *xmin_it + (*xmax_it - *xmin_it) * k / 40.0;
      lower += num(sx(x)) + "," + num(sy(fit.predict(x) - fit.half_width(x))) + " ";
    }
    s += "<polygon class=\"band\" points=\"" + upper + lower + "\" fill=\"#9ecae1\" fill-opacity=\"0.45\"/>\n";
    s += "<line class=\"fit\" x1=\"" + num(sx(*xmin_it)) + "\" y1=\"" + num(sy(fit.predict(*xmin_it))) + "\" x2=\"" +
         num(sx(*xmax_it)) + "\" y2=\"" + num(sy(fit.predict(*xmax_it))) + "\" stroke=\"#08519c\" stroke-width=\"1.5\"/>\n";
  }
  for (size_t i = 0; i < xs.size(); ++i)
    s += "<circle class=\"point\" cx=\"" + num(sx(xs[i])) + "\" cy=\"" + num(sy(ys[i])) +
         "\" r=\"3.5\" fill=\"#d94801\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    s += text(sx(xv), h - bm + 16, num(100.0 * xv, 1), 10);
    s += text(l - 6, sy(yv) + 3, num(100.0 * yv, 1), 10, "end");
  }
  s += text(w / 2, h - 12, a + " top-1 (%)", 11);
  s += "<text x=\"16\" y=\"" + num(h / 2) + "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num(h / 2) + ")\">" + escape_xml(b + " top-1 (%)") + "</text>\n";
  s += "</svg>\n";
  return s;
}

std::string op_colour(const CellOp& op) {
  switch (op.kind) {
    case OpKind::Zero: return "#f0f0f0";
    case OpKind::Basic: return "#c7e9c0";
    case OpKind::Bottleneck: return "#74c476";
    case OpKind::MBConv: break;
  }
  static const std::map<std::pair<int, int>, std::string> colours = {
      {{3, 3}, "#fee6ce"}, {{3, 5}, "#fdae6b"}, {{3, 7}, "#e6550d"}, {{6, 3}, "#dadaeb"}, {{6, 5}, "#9e9ac8"},
      {{6, 7}, "#54278f"}};
  const auto it = colours.find({op.expansion, op.kernel});
  return it == colours.end() ? "#bdbdbd" : it->second;
}

}  // namespace

std::string arch_diagram_svg(const ArchitectureSpec& arch, const std::string& title) {
  validate_arch(arch);
  const NetworkPlan plan = plan_network(arch);
  int stages = 0;
  for (const auto& c : plan.cells) stages = std::max(stages, c.stage + 1);
  const double box_w = 74.0, box_h = 26.0, gap = 6.0, stage_gap = 18.0, left = 20.0, top = 50.0;
  std::vector<int> per_stage(static_cast<size_t>(stages), 0);
  for (const auto& c : plan.cells) ++per_stage[static_cast<size_t>(c.stage)];
  const int tallest = *std::max_element(per_stage.begin(), per_stage.end());
  const double w = left * 2 + box_w + 20.0 + stages * (box_w + 16.0 + stage_gap);
  const double h = top + tallest * (box_h + gap) + 60.0;

  std::string s = svg_open(w, h);
  s += text(w / 2, 22, title.empty() ? family_name(arch.family) + " architecture" : title, 13);
  // Stem.
  s += "<rect class=\"stem\" x=\"" + num(left) + "\" y=\"" + num(top + 20) + "\" width=\"" + num(box_w) +
       "\" height=\"" + num(box_h) + "\" rx=\"4\" fill=\"#d9d9d9\" stroke=\"#525252\"/>\n";
  s += text(left + box_w / 2, top + 20 + box_h / 2 + 4, "Stem", 10);
  double x = left + box_w + 20.0;
  size_t cell_index = 0;
  for (int st = 0; st < stages; ++st) {
    const int n = per_stage[static_cast<size_t>(st)];
    const double gw = box_w + 16.0, gh = 20.0 + n * (box_h + gap) + 4.0;
    s += "<g class=\"stage\" data-stage=\"" + std::to_string(st + 1) + "\">\n";
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(gw) + "\" height=\"" + num(gh) +
         "\" rx=\"6\" fill=\"none\" stroke=\"#969696\" stroke-dasharray=\"4 3\"/>\n";
    const auto& first = plan.cells[cell_index];
    s += text(x + gw / 2, top + 14, "Stage " + std::to_string(st + 1) + " (" + std::to_string(first.out_channels) + ")", 10);
    for (int k = 0; k < n; ++k, ++cell_index) {
      const auto& c = plan.cells[cell_index];
      const double by = top + 20.0 + k * (box_h + gap);
      s += "<rect class=\"cell\" data-cell=\"" + std::to_string(cell_index) + "\" x=\"" + num(x + 8) + "\" y=\"" +
           num(by) + "\" width=\"" + num(box_w) + "\" height=\"" + num(box_h) + "\" rx=\"4\" fill=\"" +
           op_colour(c.op) + "\" stroke=\"#525252\"" + (c.stride == 2 ? " stroke-width=\"2.5\"" : "") + "/>\n";
      const bool dark = c.op.kind == OpKind::MBConv && c.op.kernel == 7;
      s += text(x + 8 + box_w / 2, by + box_h / 2 + 4, op_label(c.op), 10, "middle",
                dark ? " fill=\"#ffffff\"" : "");
    }
    s += "</g>\n";
    x += gw + stage_gap;
  }
  s += text(left, h - 14, "Bold outline: stride 2. MB3/MB6: mobile inverted bottleneck, expansion 3/6.", 10, "start");
  s += "</svg>\n";
  return s;
}

std::string results_csv(const ResultTable& t) {
  validate(t);
  std::string s = "model,dataset,top1,params,ratio\n";
  for (size_t i = 0; i < t.models.size(); ++i)
    for (size_t j = 0; j < t.datasets.size(); ++j)
      s += csv_field(t.models[i]) + "," + csv_field(t.datasets[j]) + "," +
           exact(t.top1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + "," +
           std::to_string(t.params[i]) + "," + exact(t.ratios[i]) + "\n";
  return s;
}

std::string correlation_csv(const CorrelationReport& r) {
  std::string s = "dataset_a,dataset_b,spearman,pearson,n\n";
  const auto d = static_cast<Eigen::Index>(r.datasets.size());
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b)
      s += csv_field(r.datasets[static_cast<size_t>(a)]) + "," + csv_field(r.datasets[static_cast<size_t>(b)]) + "," +
           exact(r.spearman(a, b)) + "," + exact(r.pearson(a, b)) + "," + std::to_string(r.counts(a, b)) + "\n";
  return s;
}

ResultTable parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "model,dataset,top1,params,ratio")
    throw DataError("results.csv: unexpected header");
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < l.size(); ++i) {
      const char c = l[i];
      if (quoted) {
        if (c == '"' && i + 1 < l.size() && l[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  };
  ResultTable t;
  std::map<std::string, size_t> model_index, dataset_index;
  std::vector<std::tuple<size_t, size_t, double>> cells;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 5) throw DataError("results.csv line " + std::to_string(row) + ": expected 5 fields");
    try {
      auto [mi, new_model] = model_index.try_emplace(f[0], t.models.size());
      if (new_model) {
        t.models.push_back(f[0]);
        t.params.push_back(std::stoll(f[3]));
        t.ratios.push_back(std::stod(f[4]));
      }
      auto [di, new_dataset] = dataset_index.try_emplace(f[1], t.datasets.size());
      if (new_dataset) t.datasets.push_back(f[1]);
      cells.emplace_back(mi->second, di->second, std::stod(f[2]));
    } catch (const std::logic_error&) {
      throw DataError("results.csv line " + std::to_string(row) + ": malformed number");
    }
  }
  t.top1 = Matrix::Constant(static_cast<Eigen::Index>(t.models.size()), static_cast<Eigen::Index>(t.datasets.size()),
                            std::numeric_limits<double>::quiet_NaN());
  for (const auto& [m, d, v] : cells) t.top1(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d)) = v;
  return t;
}

std::vector<std::filesystem::path> emit_report(const CorrelationReport& report, const ResultTable& table,
                                               const std::filesystem::path& out_dir) {
  validate(table);
  if (report.datasets != table.datasets) throw DataError("report and table cover different datasets");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& body) {
    const auto path = out_dir / name;
    write_file(path, body);
    written.push_back(path);
  };
  put("results.csv", results_csv(table));
  put("corr.csv", correlation_csv(report));
  put("corr_heatmap.svg", heatmap_svg(report));
  const auto d = static_cast<Eigen::Index>(table.datasets.size());
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b) {
      std::vector<double> xs, ys;
      for (Eigen::Index i = 0; i < table.top1.rows(); ++i) {
        xs.push_back(table.top1(i, a));
        ys.push_back(table.top1(i, b));
      }
      const auto& na = table.datasets[static_cast<size_t>(a)];
      const auto& nb = table.datasets[static_cast<size_t>(b)];
      put("scatter_" + file_token(na) + "__" + file_token(nb) + ".svg",
          scatter_svg(na, nb, xs, ys, report.spearman(a, b), report.pearson(a, b)));
    }
  for (size_t i = 0; i < table.archs.size(); ++i)
    put("arch_" + file_token(table.models[i]) + ".svg", arch_diagram_svg(table.archs[i], table.models[i]));
  return written;
}

}  // namespace sslnas
