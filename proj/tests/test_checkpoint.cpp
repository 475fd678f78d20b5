#include "fspc/checkpoint.hpp"
#include "fspc/config.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

using namespace fspc;

namespace {

ModelConfig small() {
  ModelConfig m;
  m.backbone.layer_widths = {4, 6};
  m.backbone.k_neighbors = 3;
  m.backbone.embed_dim = 5;
  m.cia.hidden = 3;
  return m;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const ModelConfig cfg = small();
  const ModelParameters p = init_model(cfg, 4);
  const auto bytes = serialize_checkpoint(cfg, p, {{"epoch", 3}});
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::memcmp(bytes.data(), kCheckpointMagic, 8), 0);
  const Checkpoint c = deserialize_checkpoint(bytes);
  EXPECT_EQ(c.meta.at("epoch"), 3);
  EXPECT_EQ(to_json(c.config), to_json(cfg));
  EXPECT_EQ(serialize_checkpoint(c.config, c.params, c.meta), bytes);
}

TEST(Checkpoint, SaveAndLoadFile) {
  TempDir dir("ckpt");
  ModelConfig cfg = small();
  cfg.with_cia = false;
  const ModelParameters p = init_model(cfg, 5);
  save_checkpoint(dir.path() / "a" / "b.bin", cfg, p);
  const Checkpoint c = load_checkpoint(dir.path() / "a" / "b.bin");
  EXPECT_FALSE(c.params.cia.has_value());
  EXPECT_TRUE(c.params.backbone.head.weight == p.backbone.head.weight);
  EXPECT_TRUE(c.params.backbone.layers[1].norm.running_var == p.backbone.layers[1].norm.running_var);
}

TEST(Checkpoint, CorruptInputsAreDataErrors) {
  const ModelConfig cfg = small();
  const auto bytes = serialize_checkpoint(cfg, init_model(cfg, 6));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 8);
  for (const auto& b : {bad_magic, truncated}) {
    try {
      deserialize_checkpoint(b);
      ADD_FAILURE() << "no error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Data);
    }
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), Error);
}
