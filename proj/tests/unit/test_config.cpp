#include <gtest/gtest.h>

#include "eagle/config.hpp"
#include "eagle/error.hpp"

using eagle::KeyValueConfig;

TEST(Config, SectionsCommentsAndTypes) {
  const auto cfg = KeyValueConfig::parse(R"(
top = 1
# comment
[pipeline]
k = 25          # trailing comment
aggregation = "eagle_mean"
dump_tiles = false
ratio = 2.5e-1

[scout]
name = 'ctranspath # not a comment'
list = ["a", "b,c", 3]
)");
  EXPECT_EQ(cfg.get_int("top", 0), 1);
  EXPECT_EQ(cfg.get_int("pipeline.k", 0), 25);
  EXPECT_EQ(cfg.get_string("pipeline.aggregation"), "eagle_mean");
  EXPECT_FALSE(cfg.get_bool("pipeline.dump_tiles", true));
  EXPECT_DOUBLE_EQ(cfg.get_double("pipeline.ratio", 0), 0.25);
  EXPECT_EQ(cfg.get_string("scout.name"), "ctranspath # not a comment");
  EXPECT_EQ(cfg.get_list("scout.list"), (std::vector<std::string>{"a", "b,c", "3"}));
  EXPECT_EQ(cfg.keys_in("pipeline"), (std::vector<std::string>{"aggregation", "dump_tiles", "k", "ratio"}));
  EXPECT_EQ(cfg.get_int("missing", 7), 7);
  EXPECT_FALSE(cfg.contains("pipeline.missing"));
}

TEST(Config, OverridesReplaceValues) {
  auto cfg = KeyValueConfig::parse("[a]\nx = 1\n");
  cfg.set("a.x", "5");
  cfg.set("b.y", "\"hi\"");
  EXPECT_EQ(cfg.get_int("a.x", 0), 5);
  EXPECT_EQ(cfg.get_string("b.y"), "hi");
}

TEST(Config, MalformedInputs) {
  EXPECT_THROW((void)KeyValueConfig::parse("[unterminated\n"), eagle::Error);
  EXPECT_THROW((void)KeyValueConfig::parse("just words\n"), eagle::Error);
  const auto cfg = KeyValueConfig::parse("n = 12abc\nb = maybe\nf = 1.5x\n");
  EXPECT_THROW((void)cfg.get_int("n", 0), eagle::Error);
  EXPECT_THROW((void)cfg.get_bool("b", false), eagle::Error);
  EXPECT_THROW((void)cfg.get_double("f", 0), eagle::Error);
  EXPECT_THROW((void)KeyValueConfig::load("/nonexistent/eagle.toml"), eagle::Error);
}
