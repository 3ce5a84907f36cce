#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "sketchvid/errors.hpp"
#include "sketchvid/training.hpp"

using namespace svr;
namespace fs = std::filesystem;

namespace {

struct TinyWorld {
  fs::path dir;
  RunConfig cfg;
  Dataset ds;
  FlowCache flows;

  static TinyWorld make(const std::string& name, uint64_t seed) {
    RunConfig cfg;
    cfg.gen.plain_clips = 0;
    cfg.gen.appearance_twin_pairs = 1;
    cfg.gen.motion_twin_pairs = 1;
    cfg.gen.twin_segments = 2;
    cfg.gen.segment_frames_min = 12;
    cfg.gen.segment_frames_max = 12;
    cfg.flow.stack_length = 3;
    cfg.gen.flow_length = 3;
    cfg.flow.pyramid_levels = 3;
    cfg.model.conv_channels = {4, 8};
    cfg.model.fc_hidden = 16;
    cfg.model.embedding_dim = 8;
    cfg.model.relation_hidden1 = 12;
    cfg.model.relation_hidden2 = 6;
    cfg.train.epochs = 2;
    cfg.train.triplets_per_page = 2;
    cfg.train.batch = 4;
    cfg.train.relation_pairs = 3;
    cfg.train.mil_rounds = 2;
    cfg.train.mil_epochs = 1;
    cfg.seed = seed;

    const fs::path dir = fs::temp_directory_path() / "svr_tests" / name;
    fs::remove_all(dir);
    generate_dataset(cfg.gen, seed, dir / "data");
    Dataset ds = Dataset::load(dir / "data");
    FlowCache flows(dir / "flowcache", cfg.flow);
    return TinyWorld{dir, cfg, std::move(ds), std::move(flows)};
  }
};

}  // namespace

TEST_CASE("strong triplets: positives in interval, negatives excluded, reproducible") {
  TinyWorld w = TinyWorld::make("strong_triplets", 5);
  auto entries = w.ds.split_entries("all");
  Rng rng(3);
  auto triplets = build_triplets_strong(w.ds, StreamKind::Motion, entries, 4,
                                        w.cfg.flow.stack_length, rng);
  REQUIRE(!triplets.empty());

  for (const auto& t : triplets) {
    const SketchSequence& seq = w.ds.sketch(t.sketch_id);
    const auto iv = w.ds.alignment(seq.paired_clip_id).intervals.at(size_t(t.page_index - 1));
    const int O = int(w.ds.clip(seq.paired_clip_id).frames.size());
    // positive inside the annotated interval and feasible for a flow stack
    CHECK(t.pos_clip == seq.paired_clip_id);
    CHECK(t.pos_frame >= iv[0]);
    CHECK(t.pos_frame <= iv[1]);
    CHECK(t.pos_frame <= O - w.cfg.flow.stack_length);
    // negative never inside the page's interval of the paired clip
    if (t.neg_clip == seq.paired_clip_id) {
      CHECK((t.neg_frame < iv[0] || t.neg_frame > iv[1]));
    }
  }

  Rng rng_a(9), rng_b(9);
  auto t1 = build_triplets_strong(w.ds, StreamKind::Appearance, entries, 2, 3, rng_a);
  auto t2 = build_triplets_strong(w.ds, StreamKind::Appearance, entries, 2, 3, rng_b);
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].sketch_id == t2[i].sketch_id);
    CHECK(t1[i].pos_frame == t2[i].pos_frame);
    CHECK(t1[i].neg_clip == t2[i].neg_clip);
    CHECK(t1[i].neg_frame == t2[i].neg_frame);
  }
}

TEST_CASE("weak windows: the three-case 50% rule") {
  CHECK(weak_window(1, 3, 40) == std::array<int, 2>{1, 20});
  CHECK(weak_window(2, 3, 40) == std::array<int, 2>{10, 30});
  CHECK(weak_window(3, 3, 40) == std::array<int, 2>{20, 40});
  // single-page sequences use the first-page rule
  CHECK(weak_window(1, 1, 40) == std::array<int, 2>{1, 20});

  for (int O = 4; O <= 64; ++O) {
    const auto first = weak_window(1, 5, O);
    const auto last = weak_window(5, 5, O);
    const auto mid = weak_window(3, 5, O);
    CHECK(first[0] == 1);
    CHECK(first[1] == (O + 1) / 2);
    CHECK(last[0] == O / 2);
    CHECK(last[1] == O);
    CHECK(mid[0] == (O + 3) / 4);
    CHECK(mid[1] == (3 * O) / 4);
    CHECK(first[0] <= first[1]);
    CHECK(mid[0] <= mid[1]);
    CHECK(last[0] <= last[1]);
  }
}

TEST_CASE("mil_label_inference: flip counts, argmax selection, ties, floor") {
  auto make_bag = [](int n) {
    Bag b;
    b.sketch_id = "s0";
    b.page_index = 1;
    b.clip_id = "c0";
    for (int i = 1; i <= n; ++i) b.instances.push_back(i);
    b.positive.assign(size_t(n), true);
    return b;
  };

  {
    BagSet bags;
    bags.bags.push_back(make_bag(10));
    // distance grows with the frame index: instance 10 is furthest
    auto dist = [](const Bag&, int inst) { return double(inst); };
    const size_t flipped = mil_label_inference(bags, dist, 0.1);
    CHECK(flipped == 1);
    CHECK(bags.bags[0].positive_count() == 9);
    CHECK(bags.bags[0].positive[9] == false);  // the max-distance instance
  }
  {
    BagSet bags;
    bags.bags.push_back(make_bag(1));
    auto dist = [](const Bag&, int) { return 1.0; };
    CHECK(mil_label_inference(bags, dist, 0.5) == 0);
    CHECK(bags.bags[0].positive_count() == 1);
  }
  {
    // all distances equal: ties break toward the lower frame index
    BagSet bags;
    bags.bags.push_back(make_bag(8));
    auto dist = [](const Bag&, int) { return 2.0; };
    CHECK(mil_label_inference(bags, dist, 0.25) == 2);
    CHECK(bags.bags[0].positive[0] == false);
    CHECK(bags.bags[0].positive[1] == false);
    CHECK(bags.bags[0].positive_count() == 6);
  }
  {
    // sort-oracle comparison on random distances, cumulative over rounds
    Rng rng(17);
    BagSet bags;
    bags.bags.push_back(make_bag(23));
    std::map<int, double> d;
    for (int i = 1; i <= 23; ++i) d[i] = rng.uniform();
    auto dist = [&](const Bag&, int inst) { return d[inst]; };

    size_t n_pos = 23;
    for (int round = 0; round < 6; ++round) {
      // oracle: sort currently-positive instances by (distance desc, index asc)
      std::vector<int> pos;
      for (size_t i = 0; i < bags.bags[0].instances.size(); ++i) {
        if (bags.bags[0].positive[i]) pos.push_back(bags.bags[0].instances[i]);
      }
      std::sort(pos.begin(), pos.end(), [&](int a, int b) {
        if (d[a] != d[b]) return d[a] > d[b];
        return a < b;
      });
      const size_t expect_flips = std::min(size_t(std::ceil(0.1 * double(n_pos))), n_pos - 1);
      const size_t flipped = mil_label_inference(bags, dist, 0.1);
      CHECK(flipped == expect_flips);
      for (size_t k = 0; k < expect_flips; ++k) {
        // exactly the top-(T%) by distance flipped
        for (size_t i = 0; i < bags.bags[0].instances.size(); ++i) {
          if (bags.bags[0].instances[i] == pos[k]) CHECK(bags.bags[0].positive[i] == false);
        }
      }
      n_pos -= expect_flips;
      CHECK(bags.bags[0].positive_count() == n_pos);
      CHECK(n_pos >= 1);
    }
  }
}

TEST_CASE("bag initialization covers pages with feasible instances only") {
  TinyWorld w = TinyWorld::make("bags_init", 6);
  auto entries = w.ds.split_entries("all");
  BagSet app = init_bags_weak(w.ds, StreamKind::Appearance, entries, w.cfg.flow.stack_length);
  BagSet mo = init_bags_weak(w.ds, StreamKind::Motion, entries, w.cfg.flow.stack_length);
  REQUIRE(!app.bags.empty());

  for (const auto& b : app.bags) {
    const int O = int(w.ds.clip(b.clip_id).frames.size());
    const int pages = int(w.ds.sketch(b.sketch_id).pages.size());
    const auto win = weak_window(b.page_index, pages, O);
    REQUIRE(!b.instances.empty());
    CHECK(b.instances.front() == win[0]);
    CHECK(b.instances.back() == std::min(win[1], O));
    CHECK(b.positive_count() == b.instances.size());  // all initialized positive
  }
  for (const auto& b : mo.bags) {
    const int O = int(w.ds.clip(b.clip_id).frames.size());
    CHECK(b.instances.back() <= O - w.cfg.flow.stack_length);
  }

  // serialization round-trip
  const std::string json_text = app.to_json();
  BagSet restored = BagSet::from_json(json_text);
  REQUIRE(restored.bags.size() == app.bags.size());
  CHECK(restored.total_positives() == app.total_positives());
}

TEST_CASE("gradient routing: relation head untouched without its loss term") {
  TinyWorld w = TinyWorld::make("routing", 7);
  AppearanceModel m = AppearanceModel::create(w.cfg.model, w.cfg.gen.frame_size, 1);
  Rng rng(5);
  Tensor x1 = Tensor::uniform(Shape{3, 64, 64}, 0, 1, rng);
  Tensor x2 = Tensor::uniform(Shape{3, 64, 64}, 0, 1, rng);
  Tensor x3 = Tensor::uniform(Shape{3, 64, 64}, 0, 1, rng);

  auto one_step = [&](double lt_weight, double lr_weight) {
    Tape t;
    Var a = m.cnn.embed(t, x1);
    Var p = m.cnn.embed(t, x2);
    Var n = m.cnn.embed(t, x3);
    Var lt = triplet_loss(t, a, p, n, 0.5);
    Var scores = m.relation.scores(t, {t.concat(a, p), t.concat(a, n)});
    Tensor onehot(Shape{2});
    onehot[0] = 1.0;
    Var lr = t.softmax_cross_entropy(scores, onehot);
    Var loss = t.add(t.scale(lt, lt_weight), t.scale(lr, lr_weight));
    for (auto* prm : m.all_params()) prm->zero_grad();
    t.backward(loss);
  };

  // L_r detached: relation gradients vanish, the CNN still learns
  one_step(1.0, 0.0);
  double rel_grad = 0, cnn_grad = 0;
  for (auto* p : m.relation.params().all())
    for (double g : p->grad.values()) rel_grad += std::fabs(g);
  for (auto* p : m.cnn.params().all())
    for (double g : p->grad.values()) cnn_grad += std::fabs(g);
  CHECK(rel_grad == 0.0);
  CHECK(cnn_grad > 0.0);

  // L_t detached: both the CNN (through the relation term) and the head update
  one_step(0.0, 0.001);
  rel_grad = cnn_grad = 0;
  for (auto* p : m.relation.params().all())
    for (double g : p->grad.values()) rel_grad += std::fabs(g);
  for (auto* p : m.cnn.params().all())
    for (double g : p->grad.values()) cnn_grad += std::fabs(g);
  CHECK(rel_grad > 0.0);
  CHECK(cnn_grad > 0.0);
}

TEST_CASE("strong training runs, logs, and resumes bitwise") {
  TinyWorld w = TinyWorld::make("resume", 8);
  auto entries = w.ds.split_entries("all");
  const fs::path ckpt_path = w.dir / "mid.ckpt";

  // continuous: 2 epochs
  AppearanceModel cont = AppearanceModel::create(w.cfg.model, w.cfg.gen.frame_size, w.cfg.seed);
  StreamTrainer cont_tr(w.ds, w.flows, w.cfg, StreamKind::Appearance, cont.cnn, cont.cnn,
                        cont.relation, entries);
  TrainResult cont_res = cont_tr.train_strong();
  CHECK(!cont_res.trace.empty());
  for (const auto& row : cont_res.trace) {
    CHECK(std::isfinite(row.total));
    CHECK(row.stream == "appearance");
  }

  // split: 1 epoch, checkpoint, fresh process-style resume, 1 more epoch
  RunConfig half = w.cfg;
  half.train.epochs = 1;
  AppearanceModel part = AppearanceModel::create(half.model, half.gen.frame_size, half.seed);
  StreamTrainer part_tr(w.ds, w.flows, half, StreamKind::Appearance, part.cnn, part.cnn,
                        part.relation, entries);
  part_tr.train_strong();
  save_stream_checkpoint(ckpt_path, part, &part_tr, half.hash(), "f64");

  AppearanceModel resumed = AppearanceModel::create(w.cfg.model, w.cfg.gen.frame_size, 12345);
  StreamTrainer res_tr(w.ds, w.flows, w.cfg, StreamKind::Appearance, resumed.cnn, resumed.cnn,
                       resumed.relation, entries);
  load_stream_checkpoint(ckpt_path, resumed, &res_tr, 0);
  CHECK(res_tr.epoch() == 1);
  res_tr.train_strong();  // runs epochs [1, 2)

  CHECK(resumed.digest() == cont.digest());

  // loss CSV round-trip
  save_loss_csv(w.dir / "loss.csv", cont_res.trace, false);
  CHECK(fs::exists(w.dir / "loss.csv"));

  // config digest mismatch is rejected on load
  RunConfig other_cfg = w.cfg;
  other_cfg.train.lr = 0.5;
  CHECK_THROWS_WITH_AS(
      load_stream_checkpoint(ckpt_path, resumed, nullptr, other_cfg.hash()),
      doctest::Contains("digest mismatch"), Error);
}

TEST_CASE("weak training: MIL rounds shrink positives monotonically") {
  TinyWorld w = TinyWorld::make("weak", 9);
  auto entries = w.ds.split_entries("all");
  MotionModel m = MotionModel::create(w.cfg.model, w.cfg.gen.frame_size,
                                      w.cfg.flow.stack_length, w.cfg.seed);
  StreamTrainer tr(w.ds, w.flows, w.cfg, StreamKind::Motion, m.sketch_cnn, m.flow_cnn, m.relation,
                   entries);
  TrainResult res = tr.train_weak();
  REQUIRE(res.mil_rounds.size() == 2);
  CHECK(res.mil_rounds[0].flipped > 0);
  CHECK(res.mil_rounds[1].positives_remaining <= res.mil_rounds[0].positives_remaining);
  for (const auto& bag : tr.bags().bags) CHECK(bag.positive_count() >= 1);
}

TEST_CASE("non-finite loss halts with diagnostics and an emergency hook") {
  TinyWorld w = TinyWorld::make("halt", 10);
  auto entries = w.ds.split_entries("all");
  RunConfig cfg = w.cfg;
  cfg.train.lr = 1e160;  // blows parameters up within an update or two
  cfg.train.epochs = 50;
  AppearanceModel m = AppearanceModel::create(cfg.model, cfg.gen.frame_size, cfg.seed);
  StreamTrainer tr(w.ds, w.flows, cfg, StreamKind::Appearance, m.cnn, m.cnn, m.relation, entries);

  bool halted = false;
  TrainHooks hooks;
  hooks.on_halt = [&](const std::string& reason) {
    halted = true;
    CHECK(!reason.empty());
  };
  CHECK_THROWS_AS(tr.train_strong(hooks), Error);
  CHECK(halted);
}
