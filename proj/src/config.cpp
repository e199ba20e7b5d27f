#include "milattn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "milattn/errors.hpp"

namespace milattn {

namespace {

struct Field {
  const char* key;
  enum Kind { kInt, kDouble, kBool, kU64 } kind;
  void* ptr;
};

std::vector<Field> fields(RunConfig& c) {
  return {
      {"t", Field::kInt, &c.model.t},
      {"n", Field::kInt, &c.model.n},
      {"n_h", Field::kInt, &c.model.n_h},
      {"d_att1", Field::kInt, &c.model.d_att1},
      {"n_det1", Field::kInt, &c.model.n_det1},
      {"n_l", Field::kInt, &c.model.n_l},
      {"d_att2", Field::kInt, &c.model.d_att2},
      {"n_cls", Field::kInt, &c.model.n_cls},
      {"c", Field::kInt, &c.model.c},
      {"use_attn1", Field::kBool, &c.model.use_attn1},
      {"use_attn2", Field::kBool, &c.model.use_attn2},
      {"lambda1", Field::kDouble, &c.loss.lambda1},
      {"lambda2", Field::kDouble, &c.loss.lambda2},
      {"lambda_d", Field::kDouble, &c.loss.lambda_d},
      {"lambda_att", Field::kDouble, &c.loss.lambda_att},
      {"mil_batch_max", Field::kBool, &c.loss.mil_batch_max},
      {"lr", Field::kDouble, &c.adam.lr},
      {"beta1", Field::kDouble, &c.adam.beta1},
      {"beta2", Field::kDouble, &c.adam.beta2},
      {"eps", Field::kDouble, &c.adam.eps},
      {"grad_clip", Field::kDouble, &c.adam.grad_clip},
      {"batch_anomaly", Field::kInt, &c.batch_anomaly},
      {"batch_normal", Field::kInt, &c.batch_normal},
      {"iterations", Field::kInt, &c.iterations},
      {"seed", Field::kU64, &c.seed},
      {"eval_every", Field::kInt, &c.eval_every},
      {"checkpoint_every", Field::kInt, &c.checkpoint_every},
      {"holdout_fraction", Field::kDouble, &c.holdout_fraction},
      {"save_optimizer_state", Field::kBool, &c.save_optimizer_state},
      {"maa_include_normal", Field::kBool, &c.maa_include_normal},
  };
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void assign(const Field& f, const std::string& raw) {
  try {
    switch (f.kind) {
      case Field::kInt: {
        size_t pos = 0;
        int v = std::stoi(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        *static_cast<int*>(f.ptr) = v;
        return;
      }
      case Field::kDouble: {
        size_t pos = 0;
        double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        *static_cast<double*>(f.ptr) = v;
        return;
      }
      case Field::kU64: {
        size_t pos = 0;
        unsigned long long v = std::stoull(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument(raw);
        *static_cast<uint64_t*>(f.ptr) = v;
        return;
      }
      case Field::kBool: {
        if (raw == "true" || raw == "1") {
          *static_cast<bool*>(f.ptr) = true;
        } else if (raw == "false" || raw == "0") {
          *static_cast<bool*>(f.ptr) = false;
        } else {
          throw std::invalid_argument(raw);
        }
        return;
      }
    }
  } catch (const std::exception&) {
    throw UsageError(std::string("cannot parse value '") + raw + "' for config key " + f.key);
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  if (batch_anomaly < 1 || batch_normal < 1)
    throw UsageError("batch sizes must be at least 1 per polarity");
  if (batch_anomaly != batch_normal)
    throw UsageError("the ranking loss pairs videos: batch_anomaly must equal batch_normal");
  if (iterations < 1) throw UsageError("iterations must be positive");
  if (adam.lr <= 0.0) throw UsageError("learning rate must be positive");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw UsageError("holdout_fraction must lie in [0, 1)");
  if (eval_every < 0 || checkpoint_every < 0)
    throw UsageError("cadence settings must be nonnegative");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  auto fs = fields(cfg);
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + " is not `key = value`");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    bool found = false;
    for (const Field& f : fs) {
      if (key == f.key) {
        assign(f, value);
        found = true;
        break;
      }
    }
    if (!found) throw UsageError("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  char buf[128];
  for (const Field& f : fields(copy)) {
    switch (f.kind) {
      case Field::kInt:
        std::snprintf(buf, sizeof buf, "%s = %d\n", f.key, *static_cast<int*>(f.ptr));
        break;
      case Field::kDouble:
        std::snprintf(buf, sizeof buf, "%s = %.17g\n", f.key, *static_cast<double*>(f.ptr));
        break;
      case Field::kU64:
        std::snprintf(buf, sizeof buf, "%s = %llu\n", f.key,
                      static_cast<unsigned long long>(*static_cast<uint64_t*>(f.ptr)));
        break;
      case Field::kBool:
        std::snprintf(buf, sizeof buf, "%s = %s\n", f.key,
                      *static_cast<bool*>(f.ptr) ? "true" : "false");
        break;
    }
    out += buf;
  }
  return out;
}

}  // namespace milattn
