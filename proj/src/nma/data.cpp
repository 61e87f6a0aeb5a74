#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nodesplit/errors.hpp"
#include "nodesplit/nma.hpp"

namespace nodesplit {

namespace {

struct SmokingRow {
  const char* study;
  const char* design;
  // events/total per treatment A-D; total 0 marks an absent arm
  long y[4];
  long n[4];
};

constexpr SmokingRow kSmoking[] = {
    {"1", "AB", {79, 77, 0, 0}, {702, 694, 0, 0}},
    {"2", "AB", {18, 21, 0, 0}, {671, 535, 0, 0}},
    {"3", "AB", {8, 19, 0, 0}, {116, 149, 0, 0}},
    {"4", "AC", {75, 0, 363, 0}, {731, 0, 714, 0}},
    {"5", "AC", {2, 0, 9, 0}, {106, 0, 205, 0}},
    {"6", "AC", {58, 0, 237, 0}, {549, 0, 1561, 0}},
    {"7", "AC", {0, 0, 9, 0}, {33, 0, 48, 0}},
    {"8", "AC", {3, 0, 31, 0}, {100, 0, 98, 0}},
    {"9", "AC", {1, 0, 26, 0}, {31, 0, 95, 0}},
    {"10", "AC", {6, 0, 17, 0}, {39, 0, 77, 0}},
    {"11", "AC", {64, 0, 107, 0}, {642, 0, 761, 0}},
    {"12", "AC", {5, 0, 8, 0}, {62, 0, 90, 0}},
    {"13", "AC", {20, 0, 34, 0}, {234, 0, 237, 0}},
    {"14", "AC", {95, 0, 143, 0}, {1107, 0, 1031, 0}},
    {"15", "AC", {15, 0, 36, 0}, {187, 0, 504, 0}},
    {"16", "AC", {78, 0, 73, 0}, {584, 0, 675, 0}},
    {"17", "AC", {69, 0, 54, 0}, {1177, 0, 888, 0}},
    {"18", "ACD", {9, 0, 23, 10}, {140, 0, 140, 138}},
    {"19", "AD", {0, 0, 0, 9}, {20, 0, 0, 20}},
    {"20", "BC", {0, 20, 16, 0}, {0, 49, 43, 0}},
    {"21", "BCD", {0, 11, 12, 29}, {0, 78, 85, 170}},
    {"22", "BD", {0, 7, 0, 32}, {0, 66, 0, 127}},
    {"23", "CD", {0, 0, 12, 20}, {0, 0, 76, 74}},
    {"24", "CD", {0, 0, 9, 3}, {0, 0, 55, 26}},
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string{} : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

long parse_count(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ParseError("line " + std::to_string(line) + ": '" + s + "' is not an integer");
  }
  return v;
}

}  // namespace

std::vector<TrialArm> smoking_data() {
  std::vector<TrialArm> arms;
  const char* names[4] = {"A", "B", "C", "D"};
  for (const auto& row : kSmoking) {
    for (int t = 0; t < 4; ++t) {
      if (row.n[t] == 0) continue;
      arms.push_back({row.study, row.design, names[t], row.y[t], row.n[t]});
    }
  }
  return arms;
}

void check_trial_arms(const std::vector<TrialArm>& arms) {
  std::map<std::string, std::set<std::string>> by_study;
  for (const auto& a : arms) {
    if (a.study.empty() || a.treatment.empty()) {
      throw PreconditionError("trial arm with empty study or treatment label");
    }
    if (a.events < 0 || a.total <= 0 || a.events > a.total) {
      throw PreconditionError("study " + a.study + " arm " + a.treatment +
                              ": need 0 <= events <= total and total > 0");
    }
    if (!by_study[a.study].insert(a.treatment).second) {
      throw PreconditionError("study " + a.study + " lists treatment " + a.treatment + " twice");
    }
  }
  for (const auto& [study, ts] : by_study) {
    if (ts.size() < 2) throw PreconditionError("study " + study + " has fewer than two arms");
  }
}

std::vector<TrialArm> read_trial_arms(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> col;
  std::vector<TrialArm> arms;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    auto f = split_fields(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < f.size(); ++i) col[f[i]] = i;
      for (const char* need : {"study", "design", "treatment", "events", "total"}) {
        if (!col.count(need)) throw ParseError(std::string("missing column '") + need + "'");
      }
      continue;
    }
    if (f.size() != col.size()) {
      throw ParseError("line " + std::to_string(lineno) + ": expected " +
                       std::to_string(col.size()) + " fields");
    }
    TrialArm a;
    a.study = f[col["study"]];
    a.design = f[col["design"]];
    a.treatment = f[col["treatment"]];
    a.events = parse_count(f[col["events"]], lineno);
    a.total = parse_count(f[col["total"]], lineno);
    arms.push_back(std::move(a));
  }
  if (col.empty()) throw ParseError("trial table is empty");
  check_trial_arms(arms);
  return arms;
}

std::vector<TrialArm> load_trial_arms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_trial_arms(in);
}

}  // namespace nodesplit
