// Copyright 2026 The frkmap Authors
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

#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "frk/error.hpp"
#include "frk/evaluation.hpp"
#include "frk/model.hpp"
#include "frk/moments.hpp"
#include "frk/multicell.hpp"
#include "frk/predict.hpp"
#include "frk/types.hpp"

namespace frk {

namespace detail {

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view tok, const std::string& where,
                           long line_no, const char* field) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ParseError(where + ": line " + std::to_string(line_no) +
                     ": cannot parse " + field + " value '" +
                     std::string(tok) + "'");
  }
  if (!std::isfinite(v)) {
    throw ParseError(where + ": line " + std::to_string(line_no) + ": " +
                     field + " must be finite, got '" + std::string(tok) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') {
    line.remove_suffix(1);
  }
  return line;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open file for reading: " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) {
    throw IoError("failed while reading: " + path);
  }
  return ss.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open file for writing: " + path);
  }
  out << content;
  out.flush();
  if (!out) {
    throw IoError("failed while writing: " + path);
  }
}

inline nlohmann::json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Measurement CSV: header "x,y,rsrp" or "x,y,rsrp,cid", one row per sample.
// ---------------------------------------------------------------------------

inline std::vector<Measurement> parse_measurements(std::istream& in,
                                                   const std::string& where) {
  std::string line;
  long line_no = 0;
  bool has_cid = false;
  bool header_seen = false;
  std::vector<Measurement> obs;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view sv = detail::strip_cr(line);
    if (sv.empty()) {
      continue;
    }
    if (!header_seen) {
      if (sv == "x,y,rsrp") {
        has_cid = false;
      } else if (sv == "x,y,rsrp,cid") {
        has_cid = true;
      } else {
        throw ParseError(where + ": line " + std::to_string(line_no) +
                         ": expected header 'x,y,rsrp' or 'x,y,rsrp,cid'");
      }
      header_seen = true;
      continue;
    }
    const std::vector<std::string_view> tok = detail::split_csv(sv);
    const std::size_t want = has_cid ? 4 : 3;
    if (tok.size() != want) {
      throw ParseError(where + ": line " + std::to_string(line_no) +
                       ": expected " + std::to_string(want) +
                       " comma-separated fields, got " +
                       std::to_string(tok.size()));
    }
    Measurement m;
    m.loc.x = detail::parse_double(tok[0], where, line_no, "x");
    m.loc.y = detail::parse_double(tok[1], where, line_no, "y");
    m.value = detail::parse_double(tok[2], where, line_no, "rsrp");
    if (has_cid) {
      if (tok[3].empty()) {
        throw ParseError(where + ": line " + std::to_string(line_no) +
                         ": cid field is empty");
      }
      m.cid = std::string(tok[3]);
    }
    obs.push_back(std::move(m));
  }
  if (!header_seen) {
    throw ParseError(where + ": file is empty (missing header)");
  }
  return obs;
}

inline std::vector<Measurement> read_measurements(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open measurement file: " + path);
  }
  return parse_measurements(in, path);
}

inline void write_measurements(const std::string& path,
                               const std::vector<Measurement>& obs) {
  const bool has_cid = !obs.empty() && obs.front().cid.has_value();
  std::string out;
  out.reserve(obs.size() * 40 + 16);
  out += has_cid ? "x,y,rsrp,cid\n" : "x,y,rsrp\n";
  for (const Measurement& m : obs) {
    if (m.cid.has_value() != has_cid) {
      throw InvalidParameter(
          "cannot write measurements with mixed cid presence");
    }
    out += detail::format_double(m.loc.x);
    out += ',';
    out += detail::format_double(m.loc.y);
    out += ',';
    out += detail::format_double(m.value);
    if (has_cid) {
      out += ',';
      out += *m.cid;
    }
    out += '\n';
  }
  detail::write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Prediction grid CSV: header "x,y,z_hat,var" (single cell) or
// "x,y,z_hat,var,cid_hat" (multicell; uncovered cells carry nan values and
// an empty cid).
// ---------------------------------------------------------------------------

struct GridRow {
  double x{0.0};
  double y{0.0};
  double z_hat{0.0};
  double var{0.0};
  std::optional<std::string> cid{};
};

inline void write_grid(const std::string& path, const PredictionGrid& grid) {
  std::string out;
  out.reserve(grid.cells.size() * 48 + 16);
  out += "x,y,z_hat,var\n";
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Location p = grid.point(ix, iy);
      const Prediction& c = grid.at(ix, iy);
      out += detail::format_double(p.x);
      out += ',';
      out += detail::format_double(p.y);
      out += ',';
      out += detail::format_double(c.z_hat);
      out += ',';
      out += detail::format_double(c.var);
      out += '\n';
    }
  }
  detail::write_text_file(path, out);
}

inline void write_grid(const std::string& path, const MulticellGrid& grid) {
  std::string out;
  out.reserve(grid.cells.size() * 56 + 24);
  out += "x,y,z_hat,var,cid_hat\n";
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Location p = grid.point(ix, iy);
      const CellPrediction& c =
          grid.cells[static_cast<std::size_t>(iy) *
                         static_cast<std::size_t>(grid.nx) +
                     static_cast<std::size_t>(ix)];
      out += detail::format_double(p.x);
      out += ',';
      out += detail::format_double(p.y);
      out += ',';
      out += c.covered ? detail::format_double(c.z_hat) : "nan";
      out += ',';
      out += c.covered ? detail::format_double(c.var) : "nan";
      out += ',';
      if (c.covered) {
        out += c.cid;
      }
      out += '\n';
    }
  }
  detail::write_text_file(path, out);
}

/// Reads either grid flavor back. Unlike parse_double this accepts nan for
/// the value columns of uncovered multicell cells.
inline std::vector<GridRow> read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open grid file: " + path);
  }
  std::string line;
  long line_no = 0;
  bool has_cid = false;
  bool header_seen = false;
  std::vector<GridRow> rows;
  const auto parse_value = [&](std::string_view tok, const char* field) {
    if (tok == "nan") {
      return std::numeric_limits<double>::quiet_NaN();
    }
    return detail::parse_double(tok, path, line_no, field);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view sv = detail::strip_cr(line);
    if (sv.empty()) {
      continue;
    }
    if (!header_seen) {
      if (sv == "x,y,z_hat,var") {
        has_cid = false;
      } else if (sv == "x,y,z_hat,var,cid_hat") {
        has_cid = true;
      } else {
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": unexpected grid header");
      }
      header_seen = true;
      continue;
    }
    const std::vector<std::string_view> tok = detail::split_csv(sv);
    const std::size_t want = has_cid ? 5 : 4;
    if (tok.size() != want) {
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected " + std::to_string(want) + " fields");
    }
    GridRow row;
    row.x = detail::parse_double(tok[0], path, line_no, "x");
    row.y = detail::parse_double(tok[1], path, line_no, "y");
    row.z_hat = parse_value(tok[2], "z_hat");
    row.var = parse_value(tok[3], "var");
    if (has_cid && !tok[4].empty()) {
      row.cid = std::string(tok[4]);
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) {
    throw ParseError(path + ": file is empty (missing header)");
  }
  return rows;
}

// ---------------------------------------------------------------------------
// JSON artifacts. Every artifact carries a "schema" tag checked on load.
// ---------------------------------------------------------------------------

inline constexpr const char* kModelSchema = "frk.model/1";
inline constexpr const char* kMulticellSchema = "frk.multicell/1";
inline constexpr const char* kEmTraceSchema = "frk.em-trace/1";
inline constexpr const char* kMomentsSchema = "frk.moments/1";
inline constexpr const char* kCrossvalSchema = "frk.crossval/1";
inline constexpr const char* kCidReportSchema = "frk.cid-report/1";

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    arr.push_back(v(i));
  }
  return arr;
}

inline nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j,
                                     const char* field) {
  if (!j.is_array()) {
    throw ParseError(std::string("model artifact: ") + field +
                     " must be an array");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ParseError(std::string("model artifact: ") + field +
                       " must contain numbers");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd mat_from_json(const nlohmann::json& j,
                                     const char* field) {
  if (!j.is_array() || j.empty()) {
    throw ParseError(std::string("model artifact: ") + field +
                     " must be a non-empty array of arrays");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(std::string("model artifact: ") + field +
                       " rows have inconsistent lengths");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return m;
}

inline void require_schema(const nlohmann::json& j, const char* schema,
                           const std::string& where) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
    throw ParseError(where + ": missing schema tag");
  }
  if (j["schema"].get<std::string>() != schema) {
    throw ParseError(where + ": unsupported schema '" +
                     j["schema"].get<std::string>() + "' (expected '" +
                     schema + "')");
  }
}

inline const nlohmann::json& require_field(const nlohmann::json& j,
                                           const char* field,
                                           const std::string& where) {
  if (!j.is_object() || !j.contains(field)) {
    throw ParseError(where + ": missing field '" + field + "'");
  }
  return j[field];
}

inline nlohmann::json antenna_to_json(const AntennaSpec& a) {
  return {{"site", {a.site.x, a.site.y}},
          {"azimuth_deg", a.azimuth_deg},
          {"psi_3db_deg", a.psi_3db_deg},
          {"a_m_db", a.a_m_db}};
}

inline AntennaSpec antenna_from_json(const nlohmann::json& j,
                                     const std::string& where) {
  AntennaSpec a;
  const auto& site = require_field(j, "site", where);
  if (!site.is_array() || site.size() != 2) {
    throw ParseError(where + ": antenna site must be [x, y]");
  }
  a.site = {site[0].get<double>(), site[1].get<double>()};
  a.azimuth_deg = require_field(j, "azimuth_deg", where).get<double>();
  a.psi_3db_deg = require_field(j, "psi_3db_deg", where).get<double>();
  a.a_m_db = require_field(j, "a_m_db", where).get<double>();
  return a;
}

}  // namespace detail

inline nlohmann::json model_to_json(const FittedModel& m) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  j["trend"] = {{"tx", {m.trend.tx_location.x, m.trend.tx_location.y}},
                {"min_dist", m.trend.min_dist},
                {"gain", nullptr}};
  if (m.trend.gain_model) {
    j["trend"]["gain"] = detail::antenna_to_json(*m.trend.gain_model);
  }
  j["params"] = {{"alpha", detail::vec_to_json(m.params.alpha)},
                 {"sigma2", m.params.sigma2},
                 {"beta", m.params.beta},
                 {"phi", m.params.phi}};
  nlohmann::json centers = nlohmann::json::array();
  for (const Location& c : m.basis.centers) {
    centers.push_back({c.x, c.y});
  }
  j["basis"] = {{"tau", m.basis.tau}, {"centers", std::move(centers)}};
  j["posterior"] = {{"eta_mean", detail::vec_to_json(m.eta_mean)},
                    {"eta_cov", detail::mat_to_json(m.eta_cov)}};
  j["fit"] = {{"converged", m.converged}, {"iterations", m.iterations}};
  if (m.data_bbox) {
    j["data_bbox"] = {m.data_bbox->min_x, m.data_bbox->min_y,
                      m.data_bbox->max_x, m.data_bbox->max_y};
  } else {
    j["data_bbox"] = nullptr;
  }
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j,
                                   const std::string& where) {
  detail::require_schema(j, kModelSchema, where);
  FittedModel m;
  const auto& trend = detail::require_field(j, "trend", where);
  const auto& tx = detail::require_field(trend, "tx", where);
  m.trend.tx_location = {tx[0].get<double>(), tx[1].get<double>()};
  m.trend.min_dist = detail::require_field(trend, "min_dist", where).get<double>();
  const auto& gain = detail::require_field(trend, "gain", where);
  if (!gain.is_null()) {
    m.trend.gain_model = detail::antenna_from_json(gain, where);
  }
  const auto& params = detail::require_field(j, "params", where);
  m.params.alpha =
      detail::vec_from_json(detail::require_field(params, "alpha", where), "alpha");
  m.params.sigma2 = detail::require_field(params, "sigma2", where).get<double>();
  m.params.beta = detail::require_field(params, "beta", where).get<double>();
  m.params.phi = detail::require_field(params, "phi", where).get<double>();
  const auto& basis = detail::require_field(j, "basis", where);
  m.basis.tau = detail::require_field(basis, "tau", where).get<double>();
  for (const auto& c : detail::require_field(basis, "centers", where)) {
    m.basis.centers.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  const auto& post = detail::require_field(j, "posterior", where);
  m.eta_mean = detail::vec_from_json(
      detail::require_field(post, "eta_mean", where), "eta_mean");
  m.eta_cov = detail::mat_from_json(
      detail::require_field(post, "eta_cov", where), "eta_cov");
  const auto& fitj = detail::require_field(j, "fit", where);
  m.converged = detail::require_field(fitj, "converged", where).get<bool>();
  m.iterations = detail::require_field(fitj, "iterations", where).get<int>();
  const auto& bbox = detail::require_field(j, "data_bbox", where);
  if (!bbox.is_null()) {
    m.data_bbox = BoundingBox{bbox[0].get<double>(), bbox[1].get<double>(),
                              bbox[2].get<double>(), bbox[3].get<double>()};
  }
  validate_model(m);
  return m;
}

inline void save_model(const std::string& path, const FittedModel& m) {
  detail::write_text_file(path, model_to_json(m).dump(2) + "\n");
}

inline FittedModel load_model(const std::string& path) {
  return model_from_json(detail::parse_json_file(path), path);
}

inline nlohmann::json multicell_to_json(const std::vector<CellModel>& cells) {
  nlohmann::json j;
  j["schema"] = kMulticellSchema;
  nlohmann::json arr = nlohmann::json::array();
  for (const CellModel& c : cells) {
    nlohmann::json cj;
    cj["cid"] = c.cid;
    cj["antenna"] = detail::antenna_to_json(c.antenna);
    cj["domain"] = {{"wedge_half_angle_deg", c.domain.wedge_half_angle_deg},
                    {"max_radius_m", nullptr}};
    if (c.domain.max_radius_m) {
      cj["domain"]["max_radius_m"] = *c.domain.max_radius_m;
    }
    cj["model"] = model_to_json(c.model);
    arr.push_back(std::move(cj));
  }
  j["cells"] = std::move(arr);
  return j;
}

inline std::vector<CellModel> multicell_from_json(const nlohmann::json& j,
                                                  const std::string& where) {
  detail::require_schema(j, kMulticellSchema, where);
  std::vector<CellModel> cells;
  for (const auto& cj : detail::require_field(j, "cells", where)) {
    CellModel c;
    c.cid = detail::require_field(cj, "cid", where).get<std::string>();
    c.antenna =
        detail::antenna_from_json(detail::require_field(cj, "antenna", where), where);
    const auto& dj = detail::require_field(cj, "domain", where);
    c.domain.wedge_half_angle_deg =
        detail::require_field(dj, "wedge_half_angle_deg", where).get<double>();
    const auto& radius = detail::require_field(dj, "max_radius_m", where);
    if (!radius.is_null()) {
      c.domain.max_radius_m = radius.get<double>();
    }
    c.model = model_from_json(detail::require_field(cj, "model", where), where);
    cells.push_back(std::move(c));
  }
  if (cells.empty()) {
    throw ParseError(where + ": multicell artifact contains no cells");
  }
  return cells;
}

inline void save_multicell(const std::string& path,
                           const std::vector<CellModel>& cells) {
  detail::write_text_file(path, multicell_to_json(cells).dump(2) + "\n");
}

inline std::vector<CellModel> load_multicell(const std::string& path) {
  return multicell_from_json(detail::parse_json_file(path), path);
}

inline nlohmann::json em_trace_to_json(const EmTrace& trace) {
  nlohmann::json j;
  j["schema"] = kEmTraceSchema;
  j["converged"] = trace.converged;
  nlohmann::json arr = nlohmann::json::array();
  for (const EmIteration& it : trace.iterations) {
    nlohmann::json ij;
    ij["iter"] = it.iter;
    ij["log_likelihood"] = it.log_likelihood;
    ij["params"] = {{"alpha", detail::vec_to_json(it.params.alpha)},
                    {"sigma2", it.params.sigma2},
                    {"beta", it.params.beta},
                    {"phi", it.params.phi}};
    if (it.iter > 0) {
      ij["q_value"] = it.q_value;
      ij["newton_step"] = it.newton_step;
      ij["delta_norm"] = it.delta_norm;
    }
    arr.push_back(std::move(ij));
  }
  j["iterations"] = std::move(arr);
  return j;
}

inline nlohmann::json moments_to_json(const MomentsResult& res,
                                      Eigen::Index m_bins) {
  nlohmann::json j;
  j["schema"] = kMomentsSchema;
  j["m"] = m_bins;
  j["r"] = res.k_hat.rows();
  j["sigma2_hat"] = res.sigma2_hat;
  j["k_hat"] = detail::mat_to_json(res.k_hat);
  j["k_hat_repaired"] =
      res.repaired ? detail::mat_to_json(res.k_hat_repaired)
                   : nlohmann::json(nullptr);
  j["diagnostics"] = {
      {"psd_ok", res.diagnostics.psd_ok},
      {"sigma2_lower_bound", res.diagnostics.sigma2_lower_bound},
      {"sigma2_bound_ok", res.diagnostics.sigma2_bound_ok},
      {"lambda_min_projected", res.diagnostics.lambda_min_projected},
      {"k_hat_pd", res.diagnostics.k_hat_pd},
      {"k_hat_margin", res.diagnostics.k_hat_margin},
      {"remark_ok", res.diagnostics.remark_ok}};
  return j;
}

inline nlohmann::json cv_report_to_json(const CvReport& rep,
                                        bool emit_timing = false) {
  nlohmann::json j;
  j["schema"] = kCrossvalSchema;
  j["method"] = rep.method;
  j["k"] = rep.k;
  j["seed"] = rep.seed;
  j["mean_rmse"] = std::isfinite(rep.mean_rmse) ? nlohmann::json(rep.mean_rmse)
                                                : nlohmann::json(nullptr);
  j["std_rmse"] = std::isfinite(rep.std_rmse) ? nlohmann::json(rep.std_rmse)
                                              : nlohmann::json(nullptr);
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldResult& f : rep.folds) {
    nlohmann::json fj;
    fj["fold"] = f.fold;
    fj["failed"] = f.failed;
    fj["n_train"] = f.n_train;
    fj["n_test"] = f.n_test;
    if (f.failed) {
      fj["error"] = f.error;
      fj["rmse"] = nullptr;
    } else {
      fj["rmse"] = f.rmse;
      fj["fitted"] = f.fitted;
    }
    if (emit_timing) {
      fj["fit_seconds"] = f.fit_seconds;
    }
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  return j;
}

inline nlohmann::json cid_eval_to_json(const CidEval& ev) {
  return {{"schema", kCidReportSchema},
          {"n_total", ev.n_total},
          {"n_errors", ev.n_errors},
          {"n_uncovered", ev.n_uncovered},
          {"error_rate", ev.error_rate}};
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

}  // namespace frk
