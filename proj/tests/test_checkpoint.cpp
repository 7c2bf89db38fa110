#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mmlg/checkpoint.hpp"

using namespace mmlg;
namespace fs = std::filesystem;

namespace {

struct Rig {
  Vocabulary vocab;
  ModelConfig cfg;
  Model<float> model;
  TaskRegistry registry;
  fs::path dir;

  explicit Rig(std::uint64_t seed = 1)
      : vocab(Vocabulary::build({"tok0 tok1 tok2 tok3 tok4 tok5"}, 100)),
        cfg(make_cfg(vocab)),
        model(cfg, seed) {
    dir = fs::temp_directory_path() / ("mmlg-ckpt-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    SyntheticSpec spec;
    spec.kind = SyntheticKind::copy;
    spec.n_samples = 6;
    spec.vocab_slice = 6;
    spec.min_len = 2;
    spec.max_len = 4;
    spec.seed = 3;
    TaskSpec task;
    task.name = "copy-toy";
    task.kind = TaskKind::translation;
    task.train = encode_dataset(gen_synthetic_task(spec, "copy-toy"), vocab);
    registry.add(std::move(task));
  }
  ~Rig() { fs::remove_all(dir); }

  static ModelConfig make_cfg(const Vocabulary& vocab) {
    ModelConfig cfg = ModelConfig::preset("MM-desk");
    cfg.hidden = 16;
    cfg.filter = 32;
    cfg.heads = 2;
    cfg.vocab = vocab.size();
    return cfg;
  }

  MultiTaskTrainer trainer(std::uint64_t seed = 7) {
    JointConfig joint = build_joint_config("single:copy-toy", registry);
    joint.batch_size = 3;
    TrainOptions opts;
    opts.seed = seed;
    opts.max_len = 16;
    opts.lr = 3e-3f;
    opts.warmup_steps = 5;
    return MultiTaskTrainer(model, vocab, registry, joint, opts);
  }
};

}  // namespace

TEST_CASE("checkpoint save/load/save is byte identical") {
  Rig rig;
  auto t = rig.trainer();
  t.step();
  auto ckpt = make_checkpoint(rig.model, t.optimizer(), t.global_step(), "preset=MM-desk\nseed=7\n",
                              rig.vocab.hash(), "task,dataset,metric,value,n_samples\n");
  const fs::path p1 = rig.dir / "a.mmlg";
  const fs::path p2 = rig.dir / "b.mmlg";
  save_checkpoint(p1, ckpt);
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.config_text == ckpt.config_text);
  CHECK(loaded.step_counter == 1);
  CHECK(loaded.optimizer.step == t.optimizer().step);
  save_checkpoint(p2, loaded);
  CHECK(read_file(p1) == read_file(p2));
  CHECK(read_file(p1.string() + ".metrics.csv") == ckpt.metric_history_csv);
}

TEST_CASE("checkpoint load error kinds are distinct") {
  Rig rig;
  auto t = rig.trainer();
  auto ckpt = make_checkpoint(rig.model, t.optimizer(), 0, "cfg", rig.vocab.hash(), "");
  const fs::path p = rig.dir / "c.mmlg";
  save_checkpoint(p, ckpt);
  const std::string bytes = read_file(p);

  auto write_raw = [&](const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
  };

  // wrong vocabulary -> hash mismatch
  Sha256Digest other = sha256("different vocabulary");
  try {
    load_checkpoint(p, other);
    FAIL("expected hash mismatch");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::hash);
  }
  CHECK_NOTHROW(load_checkpoint(p, rig.vocab.hash()));

  // bad magic
  std::string magic = bytes;
  magic[0] = 'X';
  write_raw(rig.dir / "magic.mmlg", magic);
  try {
    load_checkpoint(rig.dir / "magic.mmlg");
    FAIL("expected magic error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::magic);
  }

  // unsupported version
  std::string version = bytes;
  version[4] = 9;
  write_raw(rig.dir / "version.mmlg", version);
  try {
    load_checkpoint(rig.dir / "version.mmlg");
    FAIL("expected version error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::version);
  }

  // truncation
  write_raw(rig.dir / "trunc.mmlg", bytes.substr(0, bytes.size() / 2));
  try {
    load_checkpoint(rig.dir / "trunc.mmlg");
    FAIL("expected truncation error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::truncated);
  }
}

TEST_CASE("resume reproduces the uninterrupted loss trace") {
  // uninterrupted reference run: 6 steps
  std::vector<float> reference;
  {
    Rig rig(11);
    auto t = rig.trainer(13);
    for (int i = 0; i < 6; ++i) reference.push_back(t.step()[0]);
  }

  // interrupted run: 3 steps, checkpoint, fresh model, restore, 3 more
  std::vector<float> resumed;
  fs::path ckpt_path;
  {
    Rig rig(11);
    auto t = rig.trainer(13);
    for (int i = 0; i < 3; ++i) resumed.push_back(t.step()[0]);
    auto ckpt = make_checkpoint(rig.model, t.optimizer(), t.global_step(), "cfg", rig.vocab.hash(), "");
    ckpt_path = rig.dir / "resume.mmlg";
    save_checkpoint(ckpt_path, ckpt);

    Rig rig2(999);  // different init; state comes from the checkpoint
    auto ckpt2 = load_checkpoint(ckpt_path, rig2.vocab.hash());
    auto t2 = rig2.trainer(13);
    t2.restore(ckpt2.params, ckpt2.optimizer, ckpt2.step_counter);
    CHECK(t2.steps_done() == 3);
    for (int i = 0; i < 3; ++i) resumed.push_back(t2.step()[0]);
  }

  REQUIRE(resumed.size() == reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    CHECK(std::abs(resumed[i] - reference[i]) <=
          1e-6 * std::max({1.0f, std::abs(resumed[i]), std::abs(reference[i])}));
  }
  // the step right after resume matches exactly (bitwise state round trip)
  CHECK(resumed[3] == reference[3]);
}

TEST_CASE("apply_checkpoint validates the parameter table") {
  Rig rig;
  auto t = rig.trainer();
  auto ckpt = make_checkpoint(rig.model, t.optimizer(), 0, "cfg", rig.vocab.hash(), "");
  ckpt.params[0].first = "wrong-name";
  CHECK_THROWS_WITH_AS(apply_checkpoint(rig.model, ckpt), doctest::Contains("wrong-name"), DataError);
}
