#include "io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

namespace regdif::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, const fs::path& path, std::size_t line) {
  if (cell == "NA") return kNaN;
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last)
    throw InputError(path.string() + ":" + std::to_string(line) + ": cannot parse '" + cell +
                     "' as a number");
  return v;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::string shape(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + " rows x " + std::to_string(m.cols()) + " columns";
}

template <typename T>
T get(const Json& doc, const char* key) {
  if (!doc.contains(key)) throw InputError(std::string("missing key '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("key '") + key + "': " + e.what());
  }
}

std::vector<std::string> mask_names(const std::vector<bool>& mask, const ParamLayout& layout) {
  std::vector<std::string> out;
  for (Eigen::Index k = 0; k < layout.dimension(); ++k)
    if (mask[k]) out.push_back(layout.name(k));
  return out;
}

std::vector<bool> mask_from(const Json& names, const ParamLayout& layout) {
  std::vector<bool> mask(layout.dimension(), false);
  for (const auto& n : names) {
    try {
      mask[layout.index_of(n.get<std::string>())] = true;
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
  return mask;
}

Json vector_json(const Eigen::VectorXd& v, const ParamLayout& layout) {
  Json out = Json::object();
  if (v.size() == 0) return out;
  for (Eigen::Index k = 0; k < layout.dimension(); ++k) out[layout.name(k)] = number_or_null(v[k]);
  return out;
}

Eigen::VectorXd vector_from(const Json& obj, const ParamLayout& layout) {
  if (obj.empty()) return {};
  if (static_cast<Eigen::Index>(obj.size()) != layout.dimension())
    throw InputError("expected " + std::to_string(layout.dimension()) + " coordinates, got " +
                     std::to_string(obj.size()));
  Eigen::VectorXd v(layout.dimension());
  for (Eigen::Index k = 0; k < layout.dimension(); ++k) {
    const std::string name = layout.name(k);
    if (!obj.contains(name)) throw InputError("missing coordinate '" + name + "'");
    v[k] = number_from(obj.at(name));
  }
  return v;
}

Json numbers(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(number_or_null(x));
  return out;
}

std::vector<double> numbers_from(const Json& arr) {
  std::vector<double> out;
  for (const auto& x : arr) out.push_back(number_from(x));
  return out;
}

std::string population_step_name(PopulationStep s) {
  return s == PopulationStep::kMarginal ? "marginal" : "fixed-node";
}

PopulationStep population_step_from(const std::string& s) {
  if (s == "marginal") return PopulationStep::kMarginal;
  if (s == "fixed-node") return PopulationStep::kFixedNode;
  throw InputError("population_step must be 'marginal' or 'fixed-node', got '" + s + "'");
}

Json em_to_json(const EmConfig& c) {
  Json j;
  j["quadrature_nodes"] = c.quadrature_nodes;
  j["em_tol"] = c.em_tol;
  j["mstep_tol"] = c.mstep_tol;
  j["max_iter"] = c.max_iter;
  j["max_irls"] = c.max_irls;
  j["clamp_limit"] = c.clamp_limit;
  j["population_step"] = population_step_name(c.population_step);
  return j;
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

Table read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line);
    for (auto& c : cells) c = trim(c);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_cell(c, path, lineno));
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw InputError(path.string() + ": empty file (a header is required)");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(r, c) = rows[r][c];
  return t;
}

void write_csv(const fs::path& path, const Table& table) {
  std::ofstream out = open_out(path);
  for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
  out << '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c)
      out << (c ? "," : "") << format_number(table.values(r, c));
    out << '\n';
  }
}

Dataset read_dataset(const fs::path& responses, const fs::path& covariates) {
  const Table y = read_csv(responses);
  const Table x = read_csv(covariates);
  if (y.values.rows() == 0) throw InputError(responses.string() + ": no data rows");
  if (y.values.rows() != x.values.rows())
    throw InputError("dimension mismatch: " + responses.string() + " has " + shape(y.values) +
                     ", " + covariates.string() + " has " + shape(x.values));
  for (Eigen::Index i = 0; i < y.values.rows(); ++i)
    for (Eigen::Index j = 0; j < y.values.cols(); ++j) {
      const double v = y.values(i, j);
      if (v != 0.0 && v != 1.0)
        throw InputError(responses.string() + ":" + std::to_string(i + 2) + ": column '" +
                         y.header[j] + "' is not 0/1");
    }
  for (Eigen::Index i = 0; i < x.values.rows(); ++i)
    if (!x.values.row(i).allFinite())
      throw InputError(covariates.string() + ":" + std::to_string(i + 2) +
                       ": covariates must be finite");
  return Dataset(y.values, x.values, x.header);
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  Table y{{}, data.responses()};
  for (Eigen::Index j = 0; j < data.num_items(); ++j) y.header.push_back("item_" + std::to_string(j + 1));
  write_csv(dir / "responses.csv", y);
  write_csv(dir / "covariates.csv", Table{data.covariate_names(), data.covariates()});
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& value) {
  std::ofstream out = open_out(path);
  out << value.dump(2) << '\n';
}

Json number_or_null(double value) { return std::isnan(value) ? Json(nullptr) : Json(value); }

double number_from(const Json& value) {
  if (value.is_null()) return kNaN;
  if (!value.is_number()) throw InputError("expected a number or null, got " + value.dump());
  return value.get<double>();
}

Json params_to_json(const ParamVector& params, const ParamLayout& layout) {
  return vector_json(params.flatten(), layout);
}

ParamVector params_from_json(const Json& object, const ParamLayout& layout) {
  const Eigen::VectorXd v = vector_from(object, layout);
  if (v.size() != layout.dimension() || !v.allFinite())
    throw InputError("parameter object must hold a finite value for every coordinate");
  return ParamVector::unflatten(v, layout);
}

Json fit_to_json(const FitResult& fit, const ParamLayout& layout, const EmConfig& config) {
  Json j;
  j["format"] = "regdif-fit";
  j["num_items"] = layout.num_items();
  j["covariates"] = layout.covariate_names();
  j["lambda"] = fit.lambda;
  j["settings"] = em_to_json(config);
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["final_loss"] = fit.final_loss;
  j["trace"] = fit.trace;
  j["penalized"] = mask_names(fit.penalty.penalized, layout);
  j["fixed_zero"] = mask_names(fit.penalty.fixed_zero, layout);
  j["estimate"] = params_to_json(fit.estimate, layout);
  j["warnings"] = fit.warnings;
  return j;
}

FitResult fit_from_json(const Json& doc, ParamLayout* layout_out, EmConfig* config_out) {
  if (!doc.is_object() || doc.value("format", "") != "regdif-fit")
    throw InputError("not a regdif fit file");
  const auto covariates = get<std::vector<std::string>>(doc, "covariates");
  const ParamLayout layout(get<Eigen::Index>(doc, "num_items"), covariates);
  FitResult fit;
  fit.lambda = get<double>(doc, "lambda");
  fit.converged = get<bool>(doc, "converged");
  fit.iterations = get<int>(doc, "iterations");
  fit.final_loss = get<double>(doc, "final_loss");
  fit.trace = get<std::vector<double>>(doc, "trace");
  fit.penalty.lambda = fit.lambda;
  fit.penalty.penalized = mask_from(get<Json>(doc, "penalized"), layout);
  fit.penalty.fixed_zero = mask_from(get<Json>(doc, "fixed_zero"), layout);
  try {
    fit.penalty.validate(layout);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  fit.estimate = params_from_json(get<Json>(doc, "estimate"), layout);
  fit.warnings = get<std::vector<std::string>>(doc, "warnings");
  const Json s = get<Json>(doc, "settings");
  EmConfig c;
  c.quadrature_nodes = get<int>(s, "quadrature_nodes");
  c.em_tol = get<double>(s, "em_tol");
  c.mstep_tol = get<double>(s, "mstep_tol");
  c.max_iter = get<int>(s, "max_iter");
  c.max_irls = get<int>(s, "max_irls");
  c.clamp_limit = get<double>(s, "clamp_limit");
  c.population_step = population_step_from(get<std::string>(s, "population_step"));
  fit.quadrature_nodes = c.quadrature_nodes;
  if (layout_out) *layout_out = layout;
  if (config_out) *config_out = c;
  return fit;
}

Json truth_to_json(const TrueModel& truth) {
  const ParamLayout layout(truth.params.num_items(), {"age", "gender", "product"});
  Json j;
  j["format"] = "regdif-truth";
  j["dif_condition"] = dif_percent(truth.condition);
  Json dif = Json::array();
  for (Eigen::Index item : truth.dif_items()) dif.push_back(item + 1);
  j["dif_items"] = dif;
  j["params"] = params_to_json(truth.params, layout);
  return j;
}

Json target_to_json(const TestTarget& t) {
  Json j;
  j["target"] = t.target;
  j["method"] = t.method;
  j["statistic"] = number_or_null(t.statistic);
  j["df"] = t.df;
  j["p_value"] = number_or_null(t.p_value);
  Json coords = Json::array();
  for (std::size_t m = 0; m < t.coordinates.size(); ++m) {
    Json c;
    c["name"] = t.coordinates[m];
    c["estimate"] = number_or_null(t.estimate[m]);
    c["debiased"] = number_or_null(t.debiased[m]);
    c["se"] = number_or_null(t.se[m]);
    c["ci_lower"] = number_or_null(t.ci_lower[m]);
    c["ci_upper"] = number_or_null(t.ci_upper[m]);
    coords.push_back(c);
  }
  j["coordinates"] = coords;
  j["warnings"] = t.warnings;
  return j;
}

TestTarget target_from_json(const Json& j) {
  TestTarget t;
  t.target = get<std::string>(j, "target");
  t.method = get<std::string>(j, "method");
  t.statistic = number_from(get<Json>(j, "statistic"));
  t.df = get<int>(j, "df");
  t.p_value = number_from(get<Json>(j, "p_value"));
  for (const auto& c : get<Json>(j, "coordinates")) {
    t.coordinates.push_back(get<std::string>(c, "name"));
    t.estimate.push_back(number_from(get<Json>(c, "estimate")));
    t.debiased.push_back(number_from(get<Json>(c, "debiased")));
    t.se.push_back(number_from(get<Json>(c, "se")));
    t.ci_lower.push_back(number_from(get<Json>(c, "ci_lower")));
    t.ci_upper.push_back(number_from(get<Json>(c, "ci_upper")));
  }
  t.warnings = get<std::vector<std::string>>(j, "warnings");
  return t;
}

Json record_to_json(const ReplicationRecord& record, const ParamLayout& layout) {
  Json j;
  j["n"] = record.n;
  j["dif_condition"] = dif_percent(record.condition);
  j["replication"] = record.replication;
  j["seed"] = record.seed;
  j["lambda"] = record.lambda;
  Json methods = Json::array();
  for (const MethodRecord& m : record.methods) {
    Json mj;
    mj["method"] = method_name(m.method);
    mj["ok"] = m.ok;
    mj["error"] = m.error;
    mj["converged"] = m.converged;
    mj["em_iterations"] = m.em_iterations;
    mj["flagged"] = m.flagged;
    mj["p_values"] = numbers(m.p_values);
    mj["estimates"] = vector_json(m.estimates, layout);
    mj["standard_errors"] = vector_json(m.standard_errors, layout);
    mj["warnings"] = m.warnings;
    methods.push_back(mj);
  }
  j["methods"] = methods;
  return j;
}

ReplicationRecord record_from_json(const Json& j, const ParamLayout& layout) {
  ReplicationRecord r;
  r.n = get<int>(j, "n");
  r.condition = dif_condition_from_percent(get<int>(j, "dif_condition"));
  r.replication = get<int>(j, "replication");
  r.seed = get<std::uint64_t>(j, "seed");
  r.lambda = get<double>(j, "lambda");
  for (const auto& mj : get<Json>(j, "methods")) {
    MethodRecord m;
    m.method = method_from_name(get<std::string>(mj, "method"));
    m.ok = get<bool>(mj, "ok");
    m.error = get<std::string>(mj, "error");
    m.converged = get<bool>(mj, "converged");
    m.em_iterations = get<int>(mj, "em_iterations");
    m.flagged = get<std::vector<int>>(mj, "flagged");
    m.p_values = numbers_from(get<Json>(mj, "p_values"));
    m.estimates = vector_from(get<Json>(mj, "estimates"), layout);
    m.standard_errors = vector_from(get<Json>(mj, "standard_errors"), layout);
    m.warnings = get<std::vector<std::string>>(mj, "warnings");
    r.methods.push_back(std::move(m));
  }
  return r;
}

StudyConfig study_config_from_json(const Json& doc) {
  if (!doc.is_object()) throw InputError("study configuration must be a JSON object");
  static const std::vector<std::string> known{
      "sample_sizes", "dif_conditions", "replications", "seed",       "methods",
      "lambda_constants", "lambda",    "alpha",        "oracle_anchors", "quadrature_nodes",
      "em_tol",       "mstep_tol",      "max_iter",     "population_step"};
  for (const auto& [key, _] : doc.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw InputError("unknown configuration key '" + key + "'");
  StudyConfig c;
  try {
    if (doc.contains("sample_sizes")) c.sample_sizes = get<std::vector<int>>(doc, "sample_sizes");
    if (doc.contains("dif_conditions")) {
      c.conditions.clear();
      for (int p : get<std::vector<int>>(doc, "dif_conditions"))
        c.conditions.push_back(dif_condition_from_percent(p));
    }
    if (doc.contains("replications")) c.replications = get<int>(doc, "replications");
    if (doc.contains("seed")) c.seed = get<std::uint64_t>(doc, "seed");
    if (doc.contains("methods")) {
      c.methods.clear();
      for (const auto& m : get<std::vector<std::string>>(doc, "methods"))
        c.methods.push_back(method_from_name(m));
    }
    if (doc.contains("lambda_constants")) {
      for (const auto& [key, value] : doc.at("lambda_constants").items()) {
        int pct = 0;
        const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), pct);
        if (ec != std::errc() || ptr != key.data() + key.size())
          throw InputError("lambda_constants keys must be 0, 25 or 50, got '" + key + "'");
        c.lambda_constants[dif_condition_from_percent(pct)] = value.get<double>();
      }
    }
    if (doc.contains("lambda") && !doc.at("lambda").is_null())
      c.lambda_override = get<double>(doc, "lambda");
    if (doc.contains("alpha")) c.alpha = get<double>(doc, "alpha");
    if (doc.contains("oracle_anchors")) {
      c.oracle_anchors.clear();
      for (int a : get<std::vector<int>>(doc, "oracle_anchors")) c.oracle_anchors.push_back(a - 1);
    }
    if (doc.contains("quadrature_nodes")) c.em.quadrature_nodes = get<int>(doc, "quadrature_nodes");
    if (doc.contains("em_tol")) c.em.em_tol = get<double>(doc, "em_tol");
    if (doc.contains("mstep_tol")) c.em.mstep_tol = get<double>(doc, "mstep_tol");
    if (doc.contains("max_iter")) c.em.max_iter = get<int>(doc, "max_iter");
    if (doc.contains("population_step"))
      c.em.population_step = population_step_from(get<std::string>(doc, "population_step"));
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("invalid study configuration: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid study configuration: ") + e.what());
  }
  return c;
}

Json study_config_to_json(const StudyConfig& c) {
  Json j;
  j["sample_sizes"] = c.sample_sizes;
  Json conds = Json::array();
  for (DifCondition d : c.conditions) conds.push_back(dif_percent(d));
  j["dif_conditions"] = conds;
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  Json methods = Json::array();
  for (Method m : c.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  Json consts = Json::object();
  for (const auto& [cond, value] : c.lambda_constants) consts[std::to_string(dif_percent(cond))] = value;
  j["lambda_constants"] = consts;
  j["lambda"] = c.lambda_override ? Json(*c.lambda_override) : Json(nullptr);
  j["alpha"] = c.alpha;
  Json anchors = Json::array();
  for (Eigen::Index a : c.oracle_anchors) anchors.push_back(a + 1);
  j["oracle_anchors"] = anchors;
  j["quadrature_nodes"] = c.em.quadrature_nodes;
  j["em_tol"] = c.em.em_tol;
  j["mstep_tol"] = c.em.mstep_tol;
  j["max_iter"] = c.em.max_iter;
  j["population_step"] = population_step_name(c.em.population_step);
  return j;
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out = open_out(path);
  out << "method,n,dif_condition,target,metric,value,n_effective\n";
  for (const MetricRow& r : rows)
    out << r.method << ',' << r.n << ',' << r.dif_condition << ',' << r.target << ',' << r.metric
        << ',' << format_number(r.value) << ',' << r.n_effective << '\n';
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "method,n,dif_condition,target,metric,value,n_effective")
    throw InputError(path.string() + ":1: unexpected header");
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 7)
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    MetricRow r;
    r.method = cells[0];
    r.n = static_cast<int>(parse_cell(cells[1], path, lineno));
    r.dif_condition = static_cast<int>(parse_cell(cells[2], path, lineno));
    r.target = cells[3];
    r.metric = cells[4];
    r.value = parse_cell(cells[5], path, lineno);
    r.n_effective = static_cast<int>(parse_cell(cells[6], path, lineno));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  Json j;
  j["command"] = m.command;
  j["software_version"] = REGDIF_VERSION;
  j["seed"] = m.seed ? Json(*m.seed) : Json(nullptr);
  j["config"] = m.config;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  Json inputs = Json::array();
  for (const auto& p : m.inputs) {
    Json e;
    e["path"] = p.string();
    e["sha256"] = sha256_file(p);
    inputs.push_back(e);
  }
  j["inputs"] = inputs;
  write_json(dir / "manifest.json", j);
}

}  // namespace regdif::io
