#include "fspc/config.hpp"
#include "fspc/optimizer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace fspc;
using nlohmann::json;

TEST(Profiles, FullProfileConstants) {
  const TrainConfig p = paper_profile();
  EXPECT_EQ(p.epochs, 80);
  EXPECT_EQ(p.train_episodes, 400);
  EXPECT_EQ(p.val_episodes, 600);
  EXPECT_EQ(p.test_episodes, 700);
  EXPECT_EQ(p.folds, 5);
  EXPECT_EQ(p.model.backbone.layer_widths, (std::vector<int>{64, 64, 128, 256}));
  EXPECT_DOUBLE_EQ(p.optimizer.lr0, 0.0008);
  EXPECT_DOUBLE_EQ(lr_at(0, p.optimizer), 0.0008);
  EXPECT_DOUBLE_EQ(lr_at(5, p.optimizer), 0.0004);
  EXPECT_DOUBLE_EQ(lr_at(10, p.optimizer), 0.0002);
  EXPECT_EQ(p.profile, "paper");
}

TEST(Profiles, DeskIsSmallerAndValid) {
  const TrainConfig d = desk_profile();
  EXPECT_EQ(d.epochs, 10);
  EXPECT_EQ(d.train_episodes, 100);
  EXPECT_EQ(d.test_episodes, 200);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(profile_by_name("desk").profile, "desk");
  EXPECT_THROW(profile_by_name("huge"), Error);
}

TEST(ConfigJson, RoundTrip) {
  TrainConfig c = paper_profile();
  c.seed = 77;
  c.model.cia.k1 = 5;
  c.model.with_cia = false;
  c.augmentation.axis = Axis::Y;
  const json j = to_json(c);
  EXPECT_EQ(j.at("schema_version"), kConfigSchemaVersion);
  EXPECT_EQ(to_json(train_config_from_json(j)), j);
}

TEST(ConfigJson, SchemaVersionIsChecked) {
  json j = to_json(desk_profile());
  j["schema_version"] = 99;
  EXPECT_THROW(train_config_from_json(j), Error);
}

TEST(Overrides, SetNestedKeys) {
  json doc = to_json(desk_profile());
  apply_override(doc, "model.cia.k1=5");
  apply_override(doc, "model.backbone.kind=pointnet");
  apply_override(doc, "model.backbone.layer_widths=[8,16]");
  apply_override(doc, "optimizer.lr0=0.01");
  apply_override(doc, "augment=false");
  const TrainConfig c = train_config_from_json(doc);
  EXPECT_EQ(c.model.cia.k1, 5);
  EXPECT_EQ(c.model.backbone.kind, BackboneKind::PointNet);
  EXPECT_EQ(c.model.backbone.layer_widths, (std::vector<int>{8, 16}));
  EXPECT_DOUBLE_EQ(c.optimizer.lr0, 0.01);
  EXPECT_FALSE(c.augment);
}

TEST(Overrides, RejectUnknownKeysAndTypeMismatches) {
  json doc = to_json(desk_profile());
  EXPECT_THROW(apply_override(doc, "model.cia.k3=1"), Error);
  EXPECT_THROW(apply_override(doc, "epochs=ten"), Error);
  EXPECT_THROW(apply_override(doc, "epochs=2.5"), Error);
  EXPECT_THROW(apply_override(doc, "augment=1"), Error);
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), Error);
  EXPECT_NO_THROW(apply_override(doc, "optimizer.lr0=1"));
}

TEST(Overrides, MergeRejectsUnknownKeys) {
  json doc = to_json(desk_profile());
  EXPECT_THROW(merge_config(doc, json{{"model", {{"bogus", 1}}}}), Error);
  merge_config(doc, json{{"model", {{"cia", {{"k2", 1}}}}}});
  EXPECT_EQ(doc["model"]["cia"]["k2"], 1);
}

TEST(Resolve, ProfileThenFileThenOverrides) {
  TempDir dir("config");
  const auto file = dir.path() / "c.json";
  std::ofstream(file) << R"({"epochs": 3, "model": {"cia": {"k1": 2}}})";
  const TrainConfig c = resolve_config("paper", file.string(), {"epochs=4"});
  EXPECT_EQ(c.epochs, 4);
  EXPECT_EQ(c.model.cia.k1, 2);
  EXPECT_EQ(c.train_episodes, 400);
  EXPECT_THROW(resolve_config("desk", "", {"epochs=0"}), Error);
  EXPECT_THROW(resolve_config("desk", (dir.path() / "missing.json").string(), {}), Error);
}

TEST(Validation, OptimizerBounds) {
  OptimizerConfig o;
  o.gamma = 0.0;
  EXPECT_THROW(o.validate(), Error);
  o = OptimizerConfig{};
  o.step_epochs = 0;
  EXPECT_THROW(o.validate(), Error);
  o = OptimizerConfig{};
  o.lr0 = -1.0;
  EXPECT_THROW(o.validate(), Error);
}
