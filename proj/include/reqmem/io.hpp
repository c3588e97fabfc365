#pragma once

// Text artifact formats: CSV with '.' decimals, LF endings and 17 significant
// digits, plus JSON documents for spectra and fit results.

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "json.hpp"

#include "reqmem/core.hpp"
#include "reqmem/fit.hpp"
#include "reqmem/trace.hpp"

namespace reqmem::io {

/// Shortest-round-trip-safe decimal with 17 significant digits.
std::string format_double(double value);

/// CSV table builder; columns are fixed at construction.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(const std::vector<double>& values);
  void add_row_with_tag(const std::vector<double>& values, const std::string& tag);
  std::string str() const { return text_; }

private:
  std::size_t columns_;
  std::string text_;
};

void write_text(const std::filesystem::path& path, const std::string& content);

/// frequency_hz,value,unit_tag
std::string spectrum_csv(const Spectrum& spectrum, double frequency_offset = 0.0);
nlohmann::json spectrum_json(const Spectrum& spectrum);
Spectrum spectrum_from_json(const nlohmann::json& doc);

/// time_s,intensity for intensity traces, time_s,re,im for fields.
std::string trace_csv(const TimeTrace& trace);

nlohmann::json fit_result_json(const fit::FitResult& result);

/// Parses `x,y[,y_err]` rows. An optional non-numeric first line is a header.
/// Throws ConfigError naming the offending rows.
fit::Dataset parse_xy_csv(std::istream& in);
fit::Dataset read_xy_csv(const std::filesystem::path& path);

}  // namespace reqmem::io
