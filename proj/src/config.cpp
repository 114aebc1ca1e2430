#include "dsg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dsg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Binding {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value);

template <>
double parse_number<double>(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': not a number: '" + value + "'");
  }
}

template <>
int parse_number<int>(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': not an integer: '" + value + "'");
  }
}

template <>
std::uint64_t parse_number<std::uint64_t>(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': not an unsigned integer: '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::runtime_error("config key '" + key + "': expected 0/1, got '" + value + "'");
}

// Ordered key table; order defines the echo layout.
const std::vector<std::pair<std::string, Binding>>& bindings() {
  static const std::vector<std::pair<std::string, Binding>> table = [] {
    std::vector<std::pair<std::string, Binding>> t;
    auto add = [&t](const std::string& key,
                    std::function<void(ExperimentConfig&, const std::string&)> set,
                    std::function<std::string(const ExperimentConfig&)> get) {
      t.push_back({key, Binding{std::move(set), std::move(get)}});
    };
    auto add_int = [&](const std::string& key, auto member) {
      add(key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            c.*member = parse_number<int>(key, v);
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); });
    };
    auto add_double = [&](const std::string& key, auto member) {
      add(key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            c.*member = parse_number<double>(key, v);
          },
          [member](const ExperimentConfig& c) { return format_double(c.*member); });
    };

    add("seed",
        [](ExperimentConfig& c, const std::string& v) {
          c.seed = parse_number<std::uint64_t>("seed", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); });
    add_int("n_train", &ExperimentConfig::n_train);
    add_int("n_val", &ExperimentConfig::n_val);
    add_int("n_test", &ExperimentConfig::n_test);

    // scene generation
    add("canvas_px",
        [](ExperimentConfig& c, const std::string& v) {
          c.scene.canvas_px = parse_number<int>("canvas_px", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.scene.canvas_px); });
    add("min_entities",
        [](ExperimentConfig& c, const std::string& v) {
          c.scene.min_entities = parse_number<int>("min_entities", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.scene.min_entities); });
    add("max_entities",
        [](ExperimentConfig& c, const std::string& v) {
          c.scene.max_entities = parse_number<int>("max_entities", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.scene.max_entities); });
    add("ambiguity_rate",
        [](ExperimentConfig& c, const std::string& v) {
          c.scene.ambiguity_rate = parse_number<double>("ambiguity_rate", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.scene.ambiguity_rate); });
    add("max_queries",
        [](ExperimentConfig& c, const std::string& v) {
          c.scene.max_queries = parse_number<int>("max_queries", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.scene.max_queries); });
    add("horizontal_dominance",
        [](ExperimentConfig& c, const std::string& v) {
          c.scene.horizontal_dominance = parse_number<double>("horizontal_dominance", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.scene.horizontal_dominance); });

    // proposal simulator
    add("jitter",
        [](ExperimentConfig& c, const std::string& v) {
          c.proposals.jitter = parse_number<double>("jitter", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.proposals.jitter); });
    add("n_background",
        [](ExperimentConfig& c, const std::string& v) {
          c.proposals.n_background = parse_number<int>("n_background", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.proposals.n_background); });

    // model widths
    auto add_model_int = [&](const std::string& key, int ModelConfig::*member) {
      add(key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            c.model.*member = parse_number<int>(key, v);
          },
          [member](const ExperimentConfig& c) { return std::to_string(c.model.*member); });
    };
    add_model_int("feat_dim", &ModelConfig::feat_dim);
    add_model_int("embed_hidden", &ModelConfig::embed_hidden);
    add_model_int("gpi_hidden", &ModelConfig::gpi_hidden);
    add_model_int("value_dim", &ModelConfig::value_dim);
    add_model_int("summary_dim", &ModelConfig::summary_dim);
    add_model_int("zprime_dim", &ModelConfig::zprime_dim);
    add_model_int("rrc_hidden", &ModelConfig::rrc_hidden);
    add_model_int("query_embed_dim", &ModelConfig::query_embed_dim);
    add("mode",
        [](ExperimentConfig& c, const std::string& v) {
          if (v == "sum") {
            c.model.mode = GpiMode::kSum;
          } else if (v == "attention") {
            c.model.mode = GpiMode::kAttention;
          } else {
            throw std::runtime_error("config key 'mode': expected sum|attention, got '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) {
          return c.model.mode == GpiMode::kSum ? "sum" : "attention";
        });

    // ablation flags
    auto add_flag = [&](const std::string& key, bool AblationFlags::*member) {
      add(key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            c.model.flags.*member = parse_bool(key, v);
          },
          [member](const ExperimentConfig& c) {
            return c.model.flags.*member ? "1" : "0";
          });
    };
    add_flag("use_dsg", &AblationFlags::use_dsg);
    add_flag("use_box_refiner", &AblationFlags::use_box_refiner);
    add_flag("use_sgl_loss", &AblationFlags::use_sgl_loss);
    add_flag("two_step", &AblationFlags::two_step);

    // training
    add("epochs",
        [](ExperimentConfig& c, const std::string& v) {
          c.train.epochs = parse_number<int>("epochs", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.train.epochs); });
    add("lr",
        [](ExperimentConfig& c, const std::string& v) {
          c.train.lr = parse_number<double>("lr", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.lr); });
    add("momentum",
        [](ExperimentConfig& c, const std::string& v) {
          c.train.momentum = parse_number<double>("momentum", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.momentum); });
    add("lr_decay",
        [](ExperimentConfig& c, const std::string& v) {
          c.train.lr_decay = parse_number<double>("lr_decay", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.train.lr_decay); });
    add("decay_period",
        [](ExperimentConfig& c, const std::string& v) {
          c.train.decay_period = parse_number<int>("decay_period", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.train.decay_period); });
    auto add_weight = [&](const std::string& key, double LossWeights::*member) {
      add(key,
          [key, member](ExperimentConfig& c, const std::string& v) {
            c.train.weights.*member = parse_number<double>(key, v);
          },
          [member](const ExperimentConfig& c) { return format_double(c.train.weights.*member); });
    };
    add_weight("w_rr", &LossWeights::w_rr);
    add_weight("w_box", &LossWeights::w_box);
    add_weight("w_sgl", &LossWeights::w_sgl);
    add_weight("w_det", &LossWeights::w_det);

    // evaluation
    add_int("map_l", &ExperimentConfig::map_l);
    add_double("sg_iou_floor", &ExperimentConfig::sg_iou_floor);
    add_int("decode_top_k", &ExperimentConfig::decode_top_k);
    return t;
  }();
  return table;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key=value, got '" + s + "'");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    bool found = false;
    for (const auto& [k, binding] : bindings()) {
      if (k == key) {
        binding.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": unknown key '" +
                               key + "'");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, binding] : bindings()) {
    os << key << " = " << binding.get(cfg) << "\n";
  }
  return os.str();
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open config for writing: " + path);
  os << config_to_text(cfg);
  if (!os) throw std::runtime_error("config write failed: " + path);
}

void apply_ablation(ExperimentConfig& cfg, const std::string& name) {
  AblationFlags& f = cfg.model.flags;
  if (name == "dsg") {
    f = AblationFlags{};
  } else if (name == "two-step") {
    f = AblationFlags{};
    f.two_step = true;
  } else if (name == "no-sgl") {
    f = AblationFlags{};
    f.use_sgl_loss = false;
  } else if (name == "no-br") {
    f = AblationFlags{};
    f.use_box_refiner = false;
  } else if (name == "no-dsg") {
    f = AblationFlags{};
    f.use_dsg = false;
  } else {
    throw std::runtime_error("unknown ablation '" + name +
                             "' (expected dsg|two-step|no-sgl|no-br|no-dsg)");
  }
}

}  // namespace dsg
