#include "reqmem/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "reqmem/errors.hpp"

namespace reqmem {

double TimeTrace::intensity(std::size_t i) const {
  return kind == TraceKind::field ? std::norm(samples[i]) : samples[i].real();
}

double TimeTrace::energy(double from, double to) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double t = time(i);
    if (t >= from && t < to) sum += intensity(i);
  }
  return sum * dt;
}

double TimeTrace::total_energy() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += intensity(i);
  return sum * dt;
}

}  // namespace reqmem

namespace reqmem::io {

std::string format_double(double value) {
  if (value == 0.0) return "0";  // also folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
  text_ += '\n';
}

void CsvTable::add_row(const std::vector<double>& values) {
  if (values.size() != columns_) throw InvalidParameter("CsvTable: wrong column count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) text_ += ',';
    text_ += format_double(values[i]);
  }
  text_ += '\n';
}

void CsvTable::add_row_with_tag(const std::vector<double>& values, const std::string& tag) {
  if (values.size() + 1 != columns_) throw InvalidParameter("CsvTable: wrong column count");
  for (double v : values) text_ += format_double(v) + ',';
  text_ += tag + '\n';
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

std::string spectrum_csv(const Spectrum& spectrum, double frequency_offset) {
  CsvTable table({"frequency_hz", "value", "unit_tag"});
  const std::string tag(to_string(spectrum.unit));
  for (std::size_t i = 0; i < spectrum.size(); ++i)
    table.add_row_with_tag({spectrum.grid.frequency(i) + frequency_offset, spectrum.values[i]}, tag);
  return table.str();
}

nlohmann::json spectrum_json(const Spectrum& spectrum) {
  return {{"grid",
           {{"center_frequency_hz", spectrum.grid.center()},
            {"span_hz", spectrum.grid.span()},
            {"bin_count", spectrum.grid.size()}}},
          {"unit_tag", std::string(to_string(spectrum.unit))},
          {"values", spectrum.values}};
}

Spectrum spectrum_from_json(const nlohmann::json& doc) {
  try {
    const auto& g = doc.at("grid");
    FrequencyGrid grid(g.at("center_frequency_hz").get<double>(), g.at("span_hz").get<double>(),
                       g.at("bin_count").get<std::size_t>());
    return Spectrum(grid, doc.at("values").get<std::vector<double>>(),
                    parse_unit_tag(doc.at("unit_tag").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spectrum JSON: ") + e.what());
  }
}

std::string trace_csv(const TimeTrace& trace) {
  if (trace.kind == TraceKind::intensity) {
    CsvTable table({"time_s", "intensity"});
    for (std::size_t i = 0; i < trace.size(); ++i) table.add_row({trace.time(i), trace.intensity(i)});
    return table.str();
  }
  CsvTable table({"time_s", "re", "im"});
  for (std::size_t i = 0; i < trace.size(); ++i)
    table.add_row({trace.time(i), trace.samples[i].real(), trace.samples[i].imag()});
  return table.str();
}

nlohmann::json fit_result_json(const fit::FitResult& result) {
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json errors = nlohmann::json::object();
  for (std::size_t i = 0; i < result.names.size(); ++i) {
    params[result.names[i]] = result.parameters[i];
    errors[result.names[i]] = result.uncertainties[i];
  }
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index i = 0; i < result.covariance.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < result.covariance.cols(); ++j) row.push_back(result.covariance(i, j));
    cov.push_back(row);
  }
  return {{"model", result.model},
          {"parameters", params},
          {"uncertainties", errors},
          {"covariance", cov},
          {"residual_norm", result.residual_norm},
          {"reduced_chi_square", result.reduced_chi_square},
          {"iterations", result.iterations},
          {"converged", result.converged},
          {"warnings", result.warnings}};
}

namespace {

bool parse_number(const std::string& field, double& out) {
  std::size_t start = field.find_first_not_of(" \t");
  std::size_t end = field.find_last_not_of(" \t\r");
  if (start == std::string::npos) return false;
  const std::string trimmed = field.substr(start, end - start + 1);
  char* stop = nullptr;
  out = std::strtod(trimmed.c_str(), &stop);
  return stop == trimmed.c_str() + trimmed.size() && std::isfinite(out);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

fit::Dataset parse_xy_csv(std::istream& in) {
  fit::Dataset data;
  std::vector<double> errs;
  std::vector<std::size_t> bad_rows;
  std::string line;
  std::size_t row = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split(line);
    std::vector<double> values;
    bool ok = fields.size() == 2 || fields.size() == 3;
    for (const auto& f : fields) {
      double v;
      if (!parse_number(f, v)) {
        ok = false;
        break;
      }
      values.push_back(v);
    }
    if (!ok) {
      if (row == 1 && data.x.empty()) continue;  // header line
      bad_rows.push_back(row);
      continue;
    }
    if (columns == 0) columns = values.size();
    if (values.size() != columns) {
      bad_rows.push_back(row);
      continue;
    }
    data.x.push_back(values[0]);
    data.y.push_back(values[1]);
    if (columns == 3) errs.push_back(values[2]);
  }
  if (!bad_rows.empty()) {
    std::string msg = "malformed CSV rows:";
    for (std::size_t k = 0; k < bad_rows.size() && k < 20; ++k) msg += " " + std::to_string(bad_rows[k]);
    if (bad_rows.size() > 20) msg += " ...";
    throw ConfigError(msg);
  }
  if (data.x.empty()) throw ConfigError("CSV contains no data rows");
  if (columns == 3) data.y_err = std::move(errs);
  return data;
}

fit::Dataset read_xy_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return parse_xy_csv(in);
}

}  // namespace reqmem::io
