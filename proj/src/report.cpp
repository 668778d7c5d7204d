// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "organ/evaluate.hpp"

namespace organ {

namespace {

std::string fixed(double v, int width = 10) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%*.4f", width, v);
  return buf;
}

}  // namespace

std::string report_to_text(const EvalReport& rep) {
  std::ostringstream out;
  std::size_t name_w = 8;
  for (const auto& r : rep.rows) name_w = std::max(name_w, r.name.size());
  out << "class";
  out << std::string(name_w - 4, ' ');
  out << "  count  input loss  output loss\n";
  for (const auto& r : rep.rows) {
    out << r.name << std::string(name_w - r.name.size() + 1, ' ');
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6d", r.count);
    out << buf << "  " << fixed(r.input_loss) << "  " << fixed(r.output_loss, 11)
        << "\n";
  }
  out << "overall" << std::string(name_w - 6, ' ');
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6d", rep.total);
  out << buf << "  " << fixed(rep.input_overall) << "  "
      << fixed(rep.output_overall, 11) << "\n";
  return out.str();
}

std::string report_to_json(const EvalReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"label", r.label},
                    {"name", r.name},
                    {"count", r.count},
                    {"input_loss", r.input_loss},
                    {"output_loss", r.output_loss}});
  nlohmann::json j{{"rows", rows},
                   {"input_overall", rep.input_overall},
                   {"output_overall", rep.output_overall},
                   {"total", rep.total}};
  return j.dump(2);
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "size,trials,missing_fraction,recovery,misplaced\n";
  for (const auto& p : points) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.2f\n", p.size,
                  p.trials, p.missing_fraction, p.recovery, p.misplaced);
    out << buf;
  }
  return out.str();
}

std::vector<SweepPoint> sweep_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line.rfind("size,trials,missing_fraction,recovery,misplaced", 0) != 0)
    throw ParseError("sweep csv: bad header");
  std::vector<SweepPoint> out;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    SweepPoint p;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf", &p.size, &p.trials,
                    &p.missing_fraction, &p.recovery, &p.misplaced) != 5)
      throw ParseError("sweep csv: bad row at line " + std::to_string(no));
    out.push_back(p);
  }
  return out;
}

}  // namespace organ
