#include "sketchvid/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"
#include "sketchvid/rng.hpp"

namespace svr {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("invalid number for " + key + ": '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw config_error("invalid integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("invalid boolean for " + key + ": '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw config_error("empty list for " + key);
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (double d : parse_double_list(key, v)) out.push_back(int(d));
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_same_v<T, double>) {
      s += fmt_double(xs[i]);
    } else {
      s += std::to_string(xs[i]);
    }
  }
  return s;
}

}  // namespace

uint64_t FlowParams::digest() const {
  std::string s = fmt_double(lambda) + "|" + fmt_double(theta) + "|" + fmt_double(tau) + "|" +
                  std::to_string(warps) + "|" + std::to_string(iterations) + "|" +
                  std::to_string(pyramid_levels) + "|" + fmt_double(scale) + "|" +
                  (median_filter ? "1" : "0") + "|" + fmt_double(max_displacement);
  return fnv1a64(s);
}

void TrainSettings::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw config_error(std::string("training.") + name + " must be positive");
  };
  positive(margin, "margin");
  positive(lr, "lr");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw config_error("training.lr_decay must lie in (0, 1]");
  }
  positive(rms_decay, "rms_decay");
  positive(rms_eps, "rms_eps");
  positive(double(batch), "batch");
  positive(double(relation_pairs), "relation_pairs");
  positive(double(epochs), "epochs");
  positive(double(triplets_per_page), "triplets_per_page");
  positive(double(mil_rounds), "mil_rounds");
  positive(double(mil_epochs), "mil_epochs");
  if (lambda1 < 0) throw config_error("training.lambda1 must be non-negative");
  if (!(mil_flip_fraction > 0.0 && mil_flip_fraction < 1.0)) {
    throw config_error("training.mil_flip_fraction must lie in (0, 1)");
  }
  if (checkpoint_dtype != "f32" && checkpoint_dtype != "f64") {
    throw config_error("training.checkpoint_dtype must be f32 or f64");
  }
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["generator.frame_size"] = std::to_string(gen.frame_size);
  kv["generator.plain_clips"] = std::to_string(gen.plain_clips);
  kv["generator.appearance_twin_pairs"] = std::to_string(gen.appearance_twin_pairs);
  kv["generator.motion_twin_pairs"] = std::to_string(gen.motion_twin_pairs);
  kv["generator.twin_segments"] = std::to_string(gen.twin_segments);
  kv["generator.segment_frames_min"] = std::to_string(gen.segment_frames_min);
  kv["generator.segment_frames_max"] = std::to_string(gen.segment_frames_max);
  kv["generator.static_prob"] = fmt_double(gen.static_prob);
  kv["generator.page_count_weights"] = join_list(gen.page_count_weights);
  kv["generator.split_train"] = fmt_double(gen.split_train);
  kv["generator.split_val"] = fmt_double(gen.split_val);
  kv["generator.flow_length"] = std::to_string(gen.flow_length);

  kv["flow.lambda"] = fmt_double(flow.lambda);
  kv["flow.theta"] = fmt_double(flow.theta);
  kv["flow.tau"] = fmt_double(flow.tau);
  kv["flow.warps"] = std::to_string(flow.warps);
  kv["flow.iterations"] = std::to_string(flow.iterations);
  kv["flow.pyramid_levels"] = std::to_string(flow.pyramid_levels);
  kv["flow.scale"] = fmt_double(flow.scale);
  kv["flow.median_filter"] = flow.median_filter ? "true" : "false";
  kv["flow.max_displacement"] = fmt_double(flow.max_displacement);
  kv["flow.stack_length"] = std::to_string(flow.stack_length);

  kv["model.conv_channels"] = join_list(model.conv_channels);
  kv["model.conv_kernel"] = std::to_string(model.conv_kernel);
  kv["model.conv_stride"] = std::to_string(model.conv_stride);
  kv["model.fc_hidden"] = std::to_string(model.fc_hidden);
  kv["model.embedding_dim"] = std::to_string(model.embedding_dim);
  kv["model.relation_hidden1"] = std::to_string(model.relation_hidden1);
  kv["model.relation_hidden2"] = std::to_string(model.relation_hidden2);

  kv["training.margin"] = fmt_double(train.margin);
  kv["training.lambda1"] = fmt_double(train.lambda1);
  kv["training.lr"] = fmt_double(train.lr);
  kv["training.lr_decay"] = fmt_double(train.lr_decay);
  kv["training.rms_decay"] = fmt_double(train.rms_decay);
  kv["training.rms_eps"] = fmt_double(train.rms_eps);
  kv["training.batch"] = std::to_string(train.batch);
  kv["training.relation_pairs"] = std::to_string(train.relation_pairs);
  kv["training.epochs"] = std::to_string(train.epochs);
  kv["training.triplets_per_page"] = std::to_string(train.triplets_per_page);
  kv["training.mil_rounds"] = std::to_string(train.mil_rounds);
  kv["training.mil_epochs"] = std::to_string(train.mil_epochs);
  kv["training.mil_flip_fraction"] = fmt_double(train.mil_flip_fraction);
  kv["training.checkpoint_dtype"] = train.checkpoint_dtype;

  kv["retrieval.lambda2"] = fmt_double(retrieval.lambda2);
  kv["retrieval.ks"] = join_list(retrieval.ks);

  kv["run.seed"] = std::to_string(seed);
  return kv;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section != "generator" && section != "flow" && section != "model" &&
          section != "training" && section != "retrieval" && section != "run") {
        throw config_error("unknown config section: [" + section + "]");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config line " + std::to_string(line_no) + " is not key = value: '" + line + "'");
    }
    const std::string key = section.empty() ? trim(line.substr(0, eq))
                                            : section + "." + trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "generator.frame_size") cfg.gen.frame_size = int(parse_int(key, val));
    else if (key == "generator.plain_clips") cfg.gen.plain_clips = int(parse_int(key, val));
    else if (key == "generator.appearance_twin_pairs") cfg.gen.appearance_twin_pairs = int(parse_int(key, val));
    else if (key == "generator.motion_twin_pairs") cfg.gen.motion_twin_pairs = int(parse_int(key, val));
    else if (key == "generator.twin_segments") cfg.gen.twin_segments = int(parse_int(key, val));
    else if (key == "generator.segment_frames_min") cfg.gen.segment_frames_min = int(parse_int(key, val));
    else if (key == "generator.segment_frames_max") cfg.gen.segment_frames_max = int(parse_int(key, val));
    else if (key == "generator.static_prob") cfg.gen.static_prob = parse_double(key, val);
    else if (key == "generator.page_count_weights") cfg.gen.page_count_weights = parse_double_list(key, val);
    else if (key == "generator.split_train") cfg.gen.split_train = parse_double(key, val);
    else if (key == "generator.split_val") cfg.gen.split_val = parse_double(key, val);
    else if (key == "generator.flow_length") cfg.gen.flow_length = int(parse_int(key, val));
    else if (key == "flow.lambda") cfg.flow.lambda = parse_double(key, val);
    else if (key == "flow.theta") cfg.flow.theta = parse_double(key, val);
    else if (key == "flow.tau") cfg.flow.tau = parse_double(key, val);
    else if (key == "flow.warps") cfg.flow.warps = int(parse_int(key, val));
    else if (key == "flow.iterations") cfg.flow.iterations = int(parse_int(key, val));
    else if (key == "flow.pyramid_levels") cfg.flow.pyramid_levels = int(parse_int(key, val));
    else if (key == "flow.scale") cfg.flow.scale = parse_double(key, val);
    else if (key == "flow.median_filter") cfg.flow.median_filter = parse_bool(key, val);
    else if (key == "flow.max_displacement") cfg.flow.max_displacement = parse_double(key, val);
    else if (key == "flow.stack_length") cfg.flow.stack_length = int(parse_int(key, val));
    else if (key == "model.conv_channels") cfg.model.conv_channels = parse_int_list(key, val);
    else if (key == "model.conv_kernel") cfg.model.conv_kernel = int(parse_int(key, val));
    else if (key == "model.conv_stride") cfg.model.conv_stride = int(parse_int(key, val));
    else if (key == "model.fc_hidden") cfg.model.fc_hidden = int(parse_int(key, val));
    else if (key == "model.embedding_dim") cfg.model.embedding_dim = int(parse_int(key, val));
    else if (key == "model.relation_hidden1") cfg.model.relation_hidden1 = int(parse_int(key, val));
    else if (key == "model.relation_hidden2") cfg.model.relation_hidden2 = int(parse_int(key, val));
    else if (key == "training.margin") cfg.train.margin = parse_double(key, val);
    else if (key == "training.lambda1") cfg.train.lambda1 = parse_double(key, val);
    else if (key == "training.lr") cfg.train.lr = parse_double(key, val);
    else if (key == "training.lr_decay") cfg.train.lr_decay = parse_double(key, val);
    else if (key == "training.rms_decay") cfg.train.rms_decay = parse_double(key, val);
    else if (key == "training.rms_eps") cfg.train.rms_eps = parse_double(key, val);
    else if (key == "training.batch") cfg.train.batch = int(parse_int(key, val));
    else if (key == "training.relation_pairs") cfg.train.relation_pairs = int(parse_int(key, val));
    else if (key == "training.epochs") cfg.train.epochs = int(parse_int(key, val));
    else if (key == "training.triplets_per_page") cfg.train.triplets_per_page = int(parse_int(key, val));
    else if (key == "training.mil_rounds") cfg.train.mil_rounds = int(parse_int(key, val));
    else if (key == "training.mil_epochs") cfg.train.mil_epochs = int(parse_int(key, val));
    else if (key == "training.mil_flip_fraction") cfg.train.mil_flip_fraction = parse_double(key, val);
    else if (key == "training.checkpoint_dtype") cfg.train.checkpoint_dtype = val;
    else if (key == "retrieval.lambda2") cfg.retrieval.lambda2 = parse_double(key, val);
    else if (key == "retrieval.ks") cfg.retrieval.ks = parse_int_list(key, val);
    else if (key == "run.seed") cfg.seed = uint64_t(parse_int(key, val));
    else throw config_error("unknown config key: " + key);
  }
  cfg.train.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  if (!fs::exists(path)) throw config_error("config file not found: " + path.string());
  return from_text(read_file_text(path));
}

std::string RunConfig::canonical_text() const {
  // Sorted flat keys, one section header per prefix change.
  auto kv = to_kv();
  std::string out;
  std::string current_section;
  for (const auto& [key, val] : kv) {
    const size_t dot = key.find('.');
    const std::string section = key.substr(0, dot);
    const std::string name = key.substr(dot + 1);
    if (section != current_section) {
      if (!out.empty()) out += "\n";
      out += "[" + section + "]\n";
      current_section = section;
    }
    out += name + " = " + val + "\n";
  }
  return out;
}

uint64_t RunConfig::hash() const {
  auto kv = to_kv();
  std::string flat;
  for (const auto& [key, val] : kv) flat += key + "=" + val + "\n";
  return fnv1a64(flat);
}

void RunConfig::save(const std::filesystem::path& path) const {
  write_file_text(path, canonical_text());
}

}  // namespace svr
