#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deconv/stats_core.hpp"

namespace deconv {

/// Ragged table of replicate vectors: subject i owns columns
/// [offset(i), offset(i+1)) of a p x N matrix.
class ReplicateDataset {
 public:
  ReplicateDataset() = default;

  ReplicateDataset(std::vector<std::string> ids, const std::vector<Matrix>& replicates) : ids_(std::move(ids)) {
    if (ids_.size() != replicates.size()) throw Error(Errc::dimension_mismatch, "one id per subject required");
    if (replicates.empty()) throw Error(Errc::empty_dataset, "no subjects");
    const auto p = replicates.front().rows();
    Eigen::Index total = 0;
    offsets_.push_back(0);
    for (const auto& r : replicates) {
      if (r.rows() != p) throw Error(Errc::dimension_mismatch, "replicates differ in dimension");
      if (r.cols() == 0) throw Error(Errc::empty_dataset, "subject without replicates");
      total += r.cols();
      offsets_.push_back(static_cast<int>(total));
    }
    values_.resize(p, total);
    for (std::size_t i = 0; i < replicates.size(); ++i)
      values_.middleCols(offsets_[i], replicates[i].cols()) = replicates[i];
    subject_of_.resize(static_cast<std::size_t>(total));
    for (std::size_t i = 0; i + 1 < offsets_.size(); ++i)
      std::fill(subject_of_.begin() + offsets_[i], subject_of_.begin() + offsets_[i + 1], static_cast<int>(i));
  }

  int dim() const { return static_cast<int>(values_.rows()); }
  int subjects() const { return static_cast<int>(ids_.size()); }
  int total() const { return static_cast<int>(values_.cols()); }
  bool empty() const { return ids_.empty(); }
  int begin(int i) const { return offsets_[static_cast<std::size_t>(i)]; }
  int end(int i) const { return offsets_[static_cast<std::size_t>(i) + 1]; }
  int replicates(int i) const { return end(i) - begin(i); }
  const Matrix& values() const { return values_; }
  const std::vector<int>& subject_of() const { return subject_of_; }
  const std::vector<std::string>& ids() const { return ids_; }

  auto subject(int i) const { return values_.middleCols(begin(i), replicates(i)); }

  Matrix subject_means() const {
    Matrix m(dim(), subjects());
    for (int i = 0; i < subjects(); ++i) m.col(i) = subject(i).rowwise().mean();
    return m;
  }

  int max_replicates() const {
    int best = 0;
    for (int i = 0; i < subjects(); ++i) best = std::max(best, replicates(i));
    return best;
  }

  /// One coordinate as a univariate dataset.
  ReplicateDataset coordinate(int l) const {
    ReplicateDataset out = *this;
    out.values_ = values_.row(l);
    return out;
  }

 private:
  Matrix values_;
  std::vector<int> offsets_;
  std::vector<int> subject_of_;
  std::vector<std::string> ids_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& s, std::size_t line_no, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::parse_error, "row " + std::to_string(line_no) + ": field '" + field + "' is not a finite number: '" + s + "'");
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads `subject,rep,x1..xp`, one row per replicate. Subjects need not be
/// contiguous; they are kept in order of first appearance and replicates are
/// ordered by rep.
inline ReplicateDataset read_replicate_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::parse_error, "empty input, expected a header row");
  const auto header = detail::split_csv_line(detail::trim(line));
  if (header.size() < 3 || detail::trim(header[0]) != "subject" || detail::trim(header[1]) != "rep")
    throw Error(Errc::parse_error, "header must start with subject,rep");
  const int p = static_cast<int>(header.size()) - 2;
  for (int l = 0; l < p; ++l)
    if (detail::trim(header[static_cast<std::size_t>(l) + 2]) != "x" + std::to_string(l + 1))
      throw Error(Errc::parse_error, "header column " + std::to_string(l + 3) + " must be x" + std::to_string(l + 1));

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<long, Vector>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != p + 2)
      throw Error(Errc::parse_error, "row " + std::to_string(line_no) + ": expected " + std::to_string(p + 2) +
                                         " fields, found " + std::to_string(cells.size()));
    const std::string id = detail::trim(cells[0]);
    if (id.empty()) throw Error(Errc::parse_error, "row " + std::to_string(line_no) + ": empty subject id");
    long rep = 0;
    try {
      std::size_t used = 0;
      const std::string r = detail::trim(cells[1]);
      rep = std::stol(r, &used);
      if (used != r.size()) throw std::invalid_argument(r);
    } catch (const std::exception&) {
      throw Error(Errc::parse_error, "row " + std::to_string(line_no) + ": field 'rep' is not an integer");
    }
    Vector v(p);
    for (int l = 0; l < p; ++l)
      v(l) = detail::parse_double(detail::trim(cells[static_cast<std::size_t>(l) + 2]), line_no, "x" + std::to_string(l + 1));
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    for (const auto& existing : it->second)
      if (existing.first == rep)
        throw Error(Errc::parse_error, "row " + std::to_string(line_no) + ": duplicate replicate " +
                                           std::to_string(rep) + " for subject " + id);
    it->second.emplace_back(rep, std::move(v));
  }
  if (order.empty()) throw Error(Errc::empty_dataset, "no data rows");
  std::vector<Matrix> reps;
  for (const auto& id : order) {
    auto& r = rows[id];
    std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Matrix m(p, static_cast<Eigen::Index>(r.size()));
    for (std::size_t j = 0; j < r.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = r[j].second;
    reps.push_back(std::move(m));
  }
  return ReplicateDataset(order, reps);
}

inline ReplicateDataset read_replicate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open dataset '" + path + "'");
  return read_replicate_csv(in);
}

inline void write_replicate_csv(const ReplicateDataset& data, std::ostream& out) {
  out << "subject,rep";
  for (int l = 0; l < data.dim(); ++l) out << ",x" << (l + 1);
  out << '\n';
  for (int i = 0; i < data.subjects(); ++i) {
    for (int j = 0; j < data.replicates(i); ++j) {
      out << data.ids()[static_cast<std::size_t>(i)] << ',' << (j + 1);
      for (int l = 0; l < data.dim(); ++l) out << ',' << detail::format_double(data.values()(l, data.begin(i) + j));
      out << '\n';
    }
  }
}

}  // namespace deconv
