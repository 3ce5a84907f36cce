#include "sketchvid/model.hpp"

#include <algorithm>
#include <cmath>

#include "sketchvid/errors.hpp"
#include "sketchvid/io.hpp"

namespace svr {

namespace {

Tensor kaiming_uniform(Shape shape, size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace

StreamNet::StreamNet(std::string name, size_t input_channels, int frame_size,
                     const ModelConfig& cfg, Rng& init_rng)
    : name_(std::move(name)), input_channels_(input_channels), frame_size_(frame_size), cfg_(cfg) {
  if (cfg_.conv_channels.empty()) throw config_error("model.conv_channels must not be empty");
  const size_t k = size_t(cfg_.conv_kernel);
  size_t in_ch = input_channels_;
  size_t spatial = size_t(frame_size_);
  for (size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
    const size_t out_ch = size_t(cfg_.conv_channels[i]);
    Parameter& p = params_.add(
        name_ + ".conv" + std::to_string(i + 1) + ".filters",
        kaiming_uniform(Shape{out_ch, in_ch, k, k}, in_ch * k * k, init_rng));
    conv_filters_.push_back(&p);
    in_ch = out_ch;
    spatial = (spatial + 2 * (k / 2) - k) / size_t(cfg_.conv_stride) + 1;
  }
  const size_t feat = in_ch;  // global average pool output
  (void)spatial;
  const size_t hidden = size_t(cfg_.fc_hidden);
  const size_t emb = size_t(cfg_.embedding_dim);
  fc1_w_ = &params_.add(name_ + ".fc1.weight", kaiming_uniform(Shape{hidden, feat}, feat, init_rng));
  fc1_b_ = &params_.add(name_ + ".fc1.bias", Tensor(Shape{hidden}));
  fc2_w_ = &params_.add(name_ + ".fc2.weight", kaiming_uniform(Shape{emb, hidden}, hidden, init_rng));
  fc2_b_ = &params_.add(name_ + ".fc2.bias", Tensor(Shape{emb}));
}

void StreamNet::check_input(const Tensor& input) const {
  if (input.ndim() != 3 || input.dim(0) != input_channels_ ||
      input.dim(1) != size_t(frame_size_) || input.dim(2) != size_t(frame_size_)) {
    throw data_error(name_ + " expects " + std::to_string(input_channels_) + " x " +
                     std::to_string(frame_size_) + " x " + std::to_string(frame_size_) +
                     " input, got " + shape_str(input.shape()));
  }
}

Var StreamNet::embed(Tape& tape, const Tensor& input) {
  check_input(input);
  const size_t pad = size_t(cfg_.conv_kernel) / 2;
  Var x = tape.input(input);
  for (Parameter* f : conv_filters_) {
    x = tape.relu(tape.conv2d(x, tape.param(*f), size_t(cfg_.conv_stride), pad));
  }
  x = tape.global_avg_pool(x);
  x = tape.relu(tape.linear(x, tape.param(*fc1_w_), tape.param(*fc1_b_)));
  return tape.linear(x, tape.param(*fc2_w_), tape.param(*fc2_b_));
}

Tensor StreamNet::embed_value(const Tensor& input) const {
  check_input(input);
  const size_t pad = size_t(cfg_.conv_kernel) / 2;
  Tensor x = input;
  for (const Parameter* f : conv_filters_) {
    x = kernels::relu(kernels::conv2d(x, f->value, size_t(cfg_.conv_stride), pad));
  }
  x = kernels::global_avg_pool(x);
  x = kernels::relu(kernels::linear(x, fc1_w_->value, fc1_b_->value));
  return kernels::linear(x, fc2_w_->value, fc2_b_->value);
}

RelationNet::RelationNet(std::string name, int embedding_dim, const ModelConfig& cfg, Rng& rng)
    : name_(std::move(name)), input_dim_(2 * embedding_dim) {
  const size_t in = size_t(input_dim_);
  const size_t h1 = size_t(cfg.relation_hidden1);
  const size_t h2 = size_t(cfg.relation_hidden2);
  w1_ = &params_.add(name_ + ".fc1.weight", kaiming_uniform(Shape{h1, in}, in, rng));
  b1_ = &params_.add(name_ + ".fc1.bias", Tensor(Shape{h1}));
  w2_ = &params_.add(name_ + ".fc2.weight", kaiming_uniform(Shape{h2, h1}, h1, rng));
  b2_ = &params_.add(name_ + ".fc2.bias", Tensor(Shape{h2}));
  // the published head stops at the second layer; a final 1-D linear maps
  // the pair representation to its match score
  w3_ = &params_.add(name_ + ".score.weight", kaiming_uniform(Shape{1, h2}, h2, rng));
  b3_ = &params_.add(name_ + ".score.bias", Tensor(Shape{1}));
}

Var RelationNet::score(Tape& tape, Var pair_concat) {
  const Tensor& v = tape.value(pair_concat);
  if (v.ndim() != 1 || int(v.dim(0)) != input_dim_) {
    throw data_error(name_ + " expects concatenated pairs of width " + std::to_string(input_dim_) +
                     ", got " + shape_str(v.shape()));
  }
  Var x = tape.relu(tape.linear(pair_concat, tape.param(*w1_), tape.param(*b1_)));
  x = tape.relu(tape.linear(x, tape.param(*w2_), tape.param(*b2_)));
  return tape.linear(x, tape.param(*w3_), tape.param(*b3_));
}

Var RelationNet::scores(Tape& tape, const std::vector<Var>& pairs) {
  if (pairs.empty()) throw data_error("relation scores need at least one pair");
  std::vector<Var> out;
  out.reserve(pairs.size());
  for (Var p : pairs) out.push_back(score(tape, p));
  return tape.stack_scalars(out);
}

AppearanceModel AppearanceModel::create(const ModelConfig& cfg, int frame_size, uint64_t seed) {
  Rng cnn_rng = Rng::substream(seed, "init.appearance.cnn");
  Rng rel_rng = Rng::substream(seed, "init.appearance.relation");
  return AppearanceModel{StreamNet("appearance.cnn", 3, frame_size, cfg, cnn_rng),
                         RelationNet("appearance.relation", cfg.embedding_dim, cfg, rel_rng)};
}

std::vector<Parameter*> AppearanceModel::all_params() {
  auto out = cnn.params().all();
  for (auto* p : relation.params().all()) out.push_back(p);
  return out;
}

uint64_t AppearanceModel::digest() const {
  return cnn.params().digest() * 0x100000001b3ULL ^ relation.params().digest();
}

MotionModel MotionModel::create(const ModelConfig& cfg, int frame_size, int stack_length,
                                uint64_t seed) {
  Rng sk_rng = Rng::substream(seed, "init.motion.sketch");
  Rng fl_rng = Rng::substream(seed, "init.motion.flow");
  Rng rel_rng = Rng::substream(seed, "init.motion.relation");
  return MotionModel{
      StreamNet("motion.sketch_cnn", 3, frame_size, cfg, sk_rng),
      StreamNet("motion.flow_cnn", size_t(2 * stack_length), frame_size, cfg, fl_rng),
      RelationNet("motion.relation", cfg.embedding_dim, cfg, rel_rng)};
}

std::vector<Parameter*> MotionModel::all_params() {
  auto out = sketch_cnn.params().all();
  for (auto* p : flow_cnn.params().all()) out.push_back(p);
  for (auto* p : relation.params().all()) out.push_back(p);
  return out;
}

uint64_t MotionModel::digest() const {
  uint64_t h = sketch_cnn.params().digest();
  h = h * 0x100000001b3ULL ^ flow_cnn.params().digest();
  h = h * 0x100000001b3ULL ^ relation.params().digest();
  return h;
}

Tensor replicate3(const Tensor& raster) {
  if (raster.ndim() == 3 && raster.dim(0) == 3) return raster;
  if (raster.ndim() != 3 || raster.dim(0) != 1) {
    throw data_error("replicate3 expects a 1 x H x W raster, got " + shape_str(raster.shape()));
  }
  const size_t h = raster.dim(1), w = raster.dim(2);
  Tensor out(Shape{3, h, w});
  for (size_t c = 0; c < 3; ++c) {
    std::copy(raster.data(), raster.data() + h * w, out.data() + c * h * w);
  }
  return out;
}

Tensor sketch_to_input(const Tensor& raster) {
  if (raster.ndim() != 3 || raster.dim(0) != 1) {
    throw data_error("sketch_to_input expects a 1 x H x W raster, got " + shape_str(raster.shape()));
  }
  Tensor inverted(raster.shape());
  for (size_t i = 0; i < raster.size(); ++i) inverted[i] = 1.0 - raster[i];
  return replicate3(inverted);
}

Tensor normalize_flow_stack(const FlowStack& stack, double max_displacement) {
  if (!(max_displacement > 0)) throw config_error("flow.max_displacement must be positive");
  Tensor out = stack.channels;
  for (auto& v : out.values()) v = std::clamp(v / max_displacement, -1.0, 1.0);
  return out;
}

Tensor embed_appearance(const AppearanceModel& m, const Tensor& x) {
  return m.cnn.embed_value(x.ndim() == 3 && x.dim(0) == 1 ? sketch_to_input(x) : x);
}

Tensor embed_motion_sketch(const MotionModel& m, const Tensor& x) {
  return m.sketch_cnn.embed_value(x.ndim() == 3 && x.dim(0) == 1 ? sketch_to_input(x) : x);
}

Tensor embed_flow(const MotionModel& m, const FlowStack& stack, double max_displacement) {
  return m.flow_cnn.embed_value(normalize_flow_stack(stack, max_displacement));
}

void Checkpoint::save(const fs::path& path) const {
  if (dtype != "f32" && dtype != "f64") throw config_error("checkpoint dtype must be f32 or f64");
  BinWriter w;
  w.magic("FGSVCKPT");
  w.u32(1);
  w.u64(config_hash);
  w.u8(dtype == "f64" ? 8 : 4);
  w.u32(uint32_t(blobs.size()));
  for (const auto& [name, tensor] : blobs) {
    w.str(name);
    w.u32(uint32_t(tensor.ndim()));
    for (size_t i = 0; i < tensor.ndim(); ++i) w.u32(uint32_t(tensor.dim(i)));
    if (dtype == "f64") w.f64_array(tensor.data(), tensor.size());
    else w.f32_array(tensor.data(), tensor.size());
  }
  w.u8(has_rng ? 1 : 0);
  for (uint64_t s : rng_state) w.u64(s);
  w.u64(epoch);
  w.u64(iteration);
  w.u64(mil_round);
  if (bags_json.size() > 0xffffffffULL) throw data_error("bag state too large");
  w.u32(uint32_t(bags_json.size()));
  for (char c : bags_json) w.u8(uint8_t(c));
  w.save(path);
}

Checkpoint Checkpoint::load(const fs::path& path) {
  BinReader r = BinReader::open(path);
  r.magic("FGSVCKPT");
  if (r.u32() != 1) throw data_error("unsupported checkpoint version in " + path.string());
  Checkpoint c;
  c.config_hash = r.u64();
  const uint8_t width = r.u8();
  if (width != 4 && width != 8) throw data_error("bad checkpoint dtype in " + path.string());
  c.dtype = width == 8 ? "f64" : "f32";
  const uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    const uint32_t ndim = r.u32();
    Shape shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(r.u32());
    Tensor t(shape);
    if (width == 8) r.f64_array(t.data(), t.size());
    else r.f32_array(t.data(), t.size());
    c.blobs.emplace_back(name, std::move(t));
  }
  c.has_rng = r.u8() != 0;
  for (auto& s : c.rng_state) s = r.u64();
  c.epoch = r.u64();
  c.iteration = r.u64();
  c.mil_round = r.u64();
  const uint32_t bag_len = r.u32();
  c.bags_json.resize(bag_len);
  for (uint32_t i = 0; i < bag_len; ++i) c.bags_json[i] = char(r.u8());
  return c;
}

void checkpoint_put_params(Checkpoint& ckpt, const ParamSet& params, const std::string& prefix) {
  for (const Parameter* p : params.all()) {
    ckpt.blobs.emplace_back(prefix + p->name, p->value);
    ckpt.blobs.emplace_back(prefix + p->name + ".sq_avg", p->sq_avg);
  }
}

void checkpoint_get_params(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix) {
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : ckpt.blobs) {
      if (n == name) return t;
    }
    throw data_error("checkpoint missing blob: " + name);
  };
  for (Parameter* p : params.all()) {
    const Tensor& v = find(prefix + p->name);
    const Tensor& s = find(prefix + p->name + ".sq_avg");
    if (!v.same_shape(p->value)) {
      throw data_error("checkpoint blob shape mismatch for " + p->name + ": stored " +
                       shape_str(v.shape()) + " vs model " + shape_str(p->value.shape()));
    }
    p->value = v;
    p->sq_avg = s;
    p->zero_grad();
  }
}

void checkpoint_put_appearance(Checkpoint& ckpt, AppearanceModel& m) {
  checkpoint_put_params(ckpt, m.cnn.params(), "");
  checkpoint_put_params(ckpt, m.relation.params(), "");
}

void checkpoint_get_appearance(const Checkpoint& ckpt, AppearanceModel& m) {
  checkpoint_get_params(ckpt, m.cnn.params(), "");
  checkpoint_get_params(ckpt, m.relation.params(), "");
}

void checkpoint_put_motion(Checkpoint& ckpt, MotionModel& m) {
  checkpoint_put_params(ckpt, m.sketch_cnn.params(), "");
  checkpoint_put_params(ckpt, m.flow_cnn.params(), "");
  checkpoint_put_params(ckpt, m.relation.params(), "");
}

void checkpoint_get_motion(const Checkpoint& ckpt, MotionModel& m) {
  checkpoint_get_params(ckpt, m.sketch_cnn.params(), "");
  checkpoint_get_params(ckpt, m.flow_cnn.params(), "");
  checkpoint_get_params(ckpt, m.relation.params(), "");
}

}  // namespace svr
