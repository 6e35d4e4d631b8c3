// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "avu/errors.h"
#include "avu/pipeline.h"

namespace avu {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Series {
  std::vector<std::string> labels;
  std::vector<double> means;
};

void write_svg(const fs::path& path, const std::string& axis,
               const std::string& metric, const Series& s) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40,
                   kBottom = 60;
  std::vector<double> xs(s.labels.size());
  bool numeric = true;
  for (std::size_t k = 0; k < s.labels.size(); ++k)
    numeric = numeric && parse_number(s.labels[k], xs[k]);
  if (!numeric)
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = static_cast<double>(k);

  double x0 = *std::min_element(xs.begin(), xs.end());
  double x1 = *std::max_element(xs.begin(), xs.end());
  if (x1 == x0) { x0 -= 1; x1 += 1; }
  if (!numeric) { x0 -= 0.5; x1 += 0.5; }
  double y0 = *std::min_element(s.means.begin(), s.means.end());
  double y1 = *std::max_element(s.means.begin(), s.means.end());
  const double pad = y1 > y0 ? 0.1 * (y1 - y0) : 1.0;
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); };

  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << metric << " vs " << axis << "</text>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\""
     << kW - kRight << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = y0 + (y1 - y0) * t / 4.0;
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << kLeft
       << "\" y2=\"" << py(y) << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(y) + 4
       << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
  }
  for (std::size_t k = 0; k < xs.size(); ++k)
    os << "<text x=\"" << px(xs[k]) << "\" y=\"" << kH - kBottom + 18
       << "\" text-anchor=\"middle\">" << s.labels[k] << "</text>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">"
     << axis << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t k = 0; k < xs.size(); ++k)
    os << px(xs[k]) << "," << py(s.means[k]) << " ";
  os << "\"/>\n";
  for (std::size_t k = 0; k < xs.size(); ++k)
    os << "<circle cx=\"" << px(xs[k]) << "\" cy=\"" << py(s.means[k])
       << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
  os << "</svg>\n";
}

}  // namespace

std::vector<fs::path> plot_ablation(const fs::path& csv, const fs::path& out_dir) {
  std::ifstream is(csv);
  if (!is) throw InputError("cannot open '" + csv.string() + "'");
  std::string line;
  if (!std::getline(is, line)) throw InputError("'" + csv.string() + "' is empty");
  const std::vector<std::string> header = split(line);
  if (header.size() < 4 || header[0] != "axis" || header[1] != "value" ||
      header[2] != "seed")
    throw InputError("'" + csv.string() + "' is not an ablation table");

  std::string axis;
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<std::string>>> groups;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    row.resize(header.size());
    axis = row[0];
    if (!groups.count(row[1])) order.push_back(row[1]);
    groups[row[1]].push_back(std::move(row));
  }
  if (order.empty()) throw InputError("'" + csv.string() + "' has no rows");

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (std::size_t col = 3; col < header.size(); ++col) {
    Series s;
    for (const auto& value : order) {
      double sum = 0.0;
      int count = 0;
      for (const auto& row : groups[value]) {
        double v;
        if (parse_number(row[col], v)) {
          sum += v;
          ++count;
        }
      }
      if (count == 0) continue;
      s.labels.push_back(value);
      s.means.push_back(sum / count);
    }
    if (s.labels.empty()) continue;
    const fs::path path = out_dir / (header[col] + "_vs_" + axis + ".svg");
    write_svg(path, axis, header[col], s);
    written.push_back(path);
  }
  return written;
}

}  // namespace avu
