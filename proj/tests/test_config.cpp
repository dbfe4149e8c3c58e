#include <gtest/gtest.h>

#include <sstream>

#include "cts/config.hpp"
#include "cts/errors.hpp"

namespace cts {
namespace {

ExperimentConfig parse_text(const std::string& text) {
  std::istringstream in(text);
  return ExperimentConfig::parse(in);
}

TEST(KeyValues, CommentsBlanksAndWhitespace) {
  std::istringstream in("# comment\n\n a = 1 \nb=x=y\n");
  KeyValues kv = parse_key_values(in);
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(kv[1].second, "x=y");
}

TEST(KeyValues, MalformedLinesNameTheLine) {
  std::istringstream missing("a=1\nnovalue\n");
  try {
    parse_key_values(missing);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream dup("a=1\na=2\n");
  EXPECT_THROW(parse_key_values(dup), ConfigError);
}

TEST(Experiment, DefaultsDeriveGridAndSeeds) {
  ExperimentConfig c = parse_text("seed=9\n");
  EXPECT_EQ(c.vit.grid_h, 16u);
  EXPECT_EQ(c.vit.grid_w, 16u);
  EXPECT_EQ(c.policy.patch_size, 4u);
  EXPECT_EQ(c.data.patch_size, 4u);
  EXPECT_EQ(c.seg.seed, 9u);
  EXPECT_EQ(c.policy.seed, 9u);
}

TEST(Experiment, RejectsBadInput) {
  EXPECT_THROW(parse_text("vit.colour=3\n"), ConfigError);
  EXPECT_THROW(parse_text("vit.depth=two\n"), ConfigError);
  EXPECT_THROW(parse_text("vit.depth=-1\n"), ConfigError);
  EXPECT_THROW(parse_text("seg.lr=0.1x\n"), ConfigError);
  EXPECT_THROW(parse_text("schedule=0,65\n"), ConfigError);
  EXPECT_THROW(parse_text("data.val_count=200\n"), ConfigError);
  EXPECT_THROW(parse_text("data.height=60\n"), ConfigError);
  EXPECT_THROW(parse_text("decoder=conv\n"), ConfigError);
  EXPECT_THROW(parse_text("vit.heads=5\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_file("/nonexistent/cts.cfg"), ConfigError);
}

TEST(Experiment, TextRoundTripIsExact) {
  ExperimentConfig c = parse_text(
      "name=x\nseed=3\nseg.lr=0.1\npolicy.widths=8,8,16\ndecoder=spatial\nschedule=0,5,64\n"
      "data.noise=0.07\n");
  const std::string text = c.to_text();
  ExperimentConfig back = parse_text(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.seg.lr, 0.1);
  EXPECT_EQ(back.data.noise_amplitude, 0.07);
  EXPECT_EQ(back.policy.widths, (std::vector<std::size_t>{8, 8, 16}));
  EXPECT_EQ(back.decoder, DecoderKind::Spatial);
  EXPECT_EQ(back.schedule, (std::vector<std::size_t>{0, 5, 64}));
}

TEST(SizeList, ParsesAndRejects) {
  EXPECT_EQ(parse_size_list("1,2, 3"), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_THROW(parse_size_list(""), ConfigError);
  EXPECT_THROW(parse_size_list("1,,2"), ConfigError);
}

}  // namespace
}  // namespace cts
