#include "cisi/dataset.hpp"

#include "cisi/errors.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cisi {

TreatmentPattern Dataset::pattern(Index row) const {
  const int k = treatment_count();
  std::uint32_t index = 0;
  for (int j = 0; j < k; ++j) {
    if (t(row, j) != 0.0) index |= 1u << (k - 1 - j);
  }
  return TreatmentPattern(k, index);
}

std::vector<std::uint32_t> Dataset::pattern_indices() const {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) out[static_cast<std::size_t>(i)] = pattern(i).index();
  return out;
}

void Dataset::validate() const {
  if (t.rows() != x.rows() || y.size() != x.rows()) {
    throw ShapeError("dataset: row counts differ (X " + std::to_string(x.rows()) + ", T " +
                     std::to_string(t.rows()) + ", y " + std::to_string(y.size()) + ")");
  }
  if (t.cols() < 1 || t.cols() > kMaxTreatments) {
    throw DataError("dataset: treatment count must be in [1, " +
                    std::to_string(kMaxTreatments) + "]");
  }
  for (Index i = 0; i < t.rows(); ++i) {
    for (Index j = 0; j < t.cols(); ++j) {
      if (t(i, j) != 0.0 && t(i, j) != 1.0) {
        throw DataError("dataset: non-binary treatment value at row " + std::to_string(i + 1));
      }
    }
  }
  if (!x.allFinite() || !y.allFinite()) throw DataError("dataset: non-finite values");
}

Dataset Dataset::select_rows(std::span<const Index> rows) const {
  Dataset out;
  out.x.resize(static_cast<Index>(rows.size()), x.cols());
  out.t.resize(static_cast<Index>(rows.size()), t.cols());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Index>(r);
    out.x.row(i) = x.row(rows[r]);
    out.t.row(i) = t.row(rows[r]);
    out.y(i) = y(rows[r]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("csv: non-numeric value '" + s + "' in column " + column + " at row " +
                    std::to_string(row));
  }
  return v;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty file '" + path.string() + "'");
  table.header = split_line(line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      throw DataError("csv: row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (Index j = 0; j < data.x.cols(); ++j) out << 'x' << (j + 1) << ',';
  for (Index j = 0; j < data.t.cols(); ++j) out << 't' << (j + 1) << ',';
  out << "y\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.x.cols(); ++j) out << format_double(data.x(i, j)) << ',';
    for (Index j = 0; j < data.t.cols(); ++j) out << (data.t(i, j) != 0.0 ? '1' : '0') << ',';
    out << format_double(data.y(i)) << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  std::vector<std::size_t> xcols;
  std::vector<std::size_t> tcols;
  int ycol = -1;
  auto numbered = [](const std::string& name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return false;
    for (std::size_t i = 1; i < name.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
    }
    return true;
  };
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (numbered(h, 'x')) {
      xcols.push_back(c);
    } else if (numbered(h, 't')) {
      tcols.push_back(c);
    } else if (h == "y") {
      ycol = static_cast<int>(c);
    }
  }
  if (ycol < 0) throw DataError("dataset csv: missing column 'y'");
  if (tcols.empty()) throw DataError("dataset csv: no treatment columns t1..tK");
  if (xcols.empty()) throw DataError("dataset csv: no covariate columns x1..xd");

  const auto n = static_cast<Index>(table.rows.size());
  Dataset d;
  d.x.resize(n, static_cast<Index>(xcols.size()));
  d.t.resize(n, static_cast<Index>(tcols.size()));
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const auto rownum = static_cast<std::size_t>(i + 1);
    for (std::size_t j = 0; j < xcols.size(); ++j) {
      d.x(i, static_cast<Index>(j)) = parse_number(row[xcols[j]], rownum, table.header[xcols[j]]);
    }
    for (std::size_t j = 0; j < tcols.size(); ++j) {
      const double v = parse_number(row[tcols[j]], rownum, table.header[tcols[j]]);
      if (v != 0.0 && v != 1.0) {
        throw DataError("dataset csv: non-binary treatment value '" + row[tcols[j]] +
                        "' at row " + std::to_string(rownum));
      }
      d.t(i, static_cast<Index>(j)) = v;
    }
    d.y(i) = parse_number(row[static_cast<std::size_t>(ycol)], rownum, "y");
  }
  d.validate();
  return d;
}

}  // namespace cisi
