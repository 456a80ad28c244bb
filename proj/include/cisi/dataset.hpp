#pragma once

#include "cisi/pattern.hpp"
#include "cisi/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cisi {

/// Observational data: covariates X (N×d), binary treatments T (N×K),
/// outcomes y (N).
struct Dataset {
  Matrix x;
  Matrix t;
  Vector y;

  Index size() const { return x.rows(); }
  Index covariate_dim() const { return x.cols(); }
  int treatment_count() const { return static_cast<int>(t.cols()); }

  TreatmentPattern pattern(Index row) const;
  /// Pattern index for every row.
  std::vector<std::uint32_t> pattern_indices() const;

  /// Throws ShapeError on inconsistent row counts, DataError on non-binary
  /// treatments or non-finite values.
  void validate() const;
  Dataset select_rows(std::span<const Index> rows) const;
};

/// Header x1..xd,t1..tK,y.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
/// Reads a file in the write_dataset_csv layout; columns are recognised by
/// their x/t prefixes and the y column.
Dataset read_dataset_csv(const std::filesystem::path& path);

/// Minimal CSV table: header plus rows of raw fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Formats a double so that parsing it back yields the same value.
std::string format_double(double v);

}  // namespace cisi
