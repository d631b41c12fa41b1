#include <gtest/gtest.h>

#include <set>
#include <sstream>
#include <tuple>

#include "eblab/config.hpp"

using namespace eblab;

namespace {

GridSpec grid_from(const std::string& text) {
  std::istringstream in(text);
  return parse_grid(in);
}

std::string error_of(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyFileGivesValidDefaults) {
  const ExperimentConfig c = parse_config_string("");
  EXPECT_EQ(c, ExperimentConfig{});
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(parse_config_string("# only a comment\n\n"), c);
}

TEST(Config, ParsesKeysAndComments) {
  const auto c = parse_config_string(
      "framework = gan\n"
      "nLayerG = 4  # trailing comment\n"
      "optimD = SGD\n"
      "lr = 1e-4\n"
      "dropoutD = true\n"
      "margin_schedule = linear\n"
      "margin = 16\n"
      "margin_decay_end = 500\n");
  EXPECT_EQ(c.framework, Framework::kGan);
  EXPECT_EQ(c.n_layer_g, 4u);
  EXPECT_EQ(c.optim_d, OptimizerKind::kSgd);
  EXPECT_EQ(c.lr, 1e-4);
  EXPECT_TRUE(c.dropout_d);
  EXPECT_EQ(margin_at(c.margin, 250), 8.0);
}

TEST(Config, RejectsBadInput) {
  EXPECT_NE(error_of("colour = red\n").find("unknown key 'colour'"), std::string::npos);
  EXPECT_NE(error_of("lr = fast\n"), "");
  EXPECT_NE(error_of("nLayerG = -3\n"), "");
  EXPECT_NE(error_of("batch_size = 1\n"), "");
  EXPECT_NE(error_of("framework = vae\n").find("ebgan or gan"), std::string::npos);
  EXPECT_NE(error_of("framework = ebgan\nnLayerD = 1\n").find("nLayerD"), std::string::npos);
  EXPECT_NE(error_of("dataset = idx\n").find("idx_images"), std::string::npos);
  EXPECT_NE(error_of("just some words\n"), "");
}

TEST(Config, GridModeRejectsIllegalValuesWithList) {
  const std::string msg = error_of("grid_mode = true\nsizeG = 400\nsizeD = 128\nnLayerG = 2\nnLayerD = 7\n");
  EXPECT_NE(msg.find("nLayerD = 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2, 3, 4, 5"), std::string::npos) << msg;
  const std::string lr = error_of("grid_mode = true\nsizeG = 400\nsizeD = 128\nnLayerG = 2\nnLayerD = 2\nlr = 0.5\n");
  EXPECT_NE(lr.find("0.01, 0.001, 0.0001"), std::string::npos) << lr;
  // EBGAN grid points must use adam at 0.001 with m = 10.
  EXPECT_NE(error_of("grid_mode = true\nsizeG = 400\nsizeD = 128\nnLayerG = 2\nnLayerD = 2\n"
                     "optimD = sgd\nmargin = 10\n"),
            "");
  EXPECT_EQ(error_of("grid_mode = true\nsizeG = 400\nsizeD = 128\nnLayerG = 2\nnLayerD = 2\n"), "");
  // Outside grid mode the same values are fine.
  EXPECT_EQ(error_of("sizeG = 400\nsizeD = 128\nnLayerG = 2\nnLayerD = 7\n"), "");
}

TEST(Config, SerializeRoundTrip) {
  ExperimentConfig c;
  c.framework = Framework::kGan;
  c.lr = 0.1 + 0.2;  // not representable in short decimal
  c.margin = MarginSchedule::linear(16, 1234);
  c.lambda_pt = 1.0 / 3.0;
  c.idx_images = "/data/train-images";
  c.dataset = "idx";
  c.seed = 987654321;
  EXPECT_EQ(parse_config_string(serialize_config(c)), c);
  EXPECT_EQ(parse_config_string(serialize_config(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Grid, OriginalSizes) {
  EXPECT_EQ(original_grid({Framework::kEbgan}).size(), 512u);
  EXPECT_EQ(original_grid({Framework::kGan}).size(), 6144u);
  const auto all = expand_grid(original_grid({Framework::kEbgan}));
  ASSERT_EQ(all.size(), 512u);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, bool>> distinct;
  for (const auto& c : all) {
    EXPECT_EQ(c.lr, 0.001);
    EXPECT_EQ(c.optim_d, OptimizerKind::kAdam);
    EXPECT_EQ(c.optim_g, OptimizerKind::kAdam);
    distinct.emplace(c.n_layer_g, c.n_layer_d, c.size_g, c.size_d, c.dropout_d);
  }
  EXPECT_EQ(distinct.size(), 512u);
}

TEST(Grid, ExpansionOrderAndSeeds) {
  const GridSpec g = grid_from(
      "framework = ebgan, gan\n"
      "nLayer = 2, 3\n"
      "sizeG = 16\nsizeD = 8, 12\n"
      "lr = 0.01, 0.001\n"
      "lambda_pt = 0, 0.1\n"
      "seeds = 2\nseed = 40\n");
  const auto runs = expand_grid(g);
  // EBGAN: 2 layers * 2 sizeD * 2 lambda * 2 seeds; GAN: 2 * 2 * 2 lr * 2 seeds.
  ASSERT_EQ(runs.size(), 16u + 16u);
  EXPECT_EQ(g.size(), runs.size());
  EXPECT_EQ(runs[0].framework, Framework::kEbgan);
  EXPECT_EQ(runs[0].seed, 40u);
  EXPECT_EQ(runs[1].seed, 41u);
  EXPECT_EQ(runs[1].lambda_pt, 0.0);
  EXPECT_EQ(runs[2].lambda_pt, 0.1);
  EXPECT_EQ(runs[4].size_d, 12u);
  EXPECT_EQ(runs[8].n_layer_g, 3u);
  EXPECT_EQ(runs[8].n_layer_d, 3u);
  EXPECT_EQ(runs[16].framework, Framework::kGan);
  EXPECT_EQ(runs[16].lr, 0.01);
  EXPECT_EQ(runs[18].lr, 0.001);
  EXPECT_EQ(runs[16].lambda_pt, 0.0);
  EXPECT_EQ(expand_grid(g), runs);
}

TEST(Grid, ParseErrors) {
  EXPECT_THROW(grid_from("nLayer = 2\nnLayerG = 3\n"), ConfigError);
  EXPECT_THROW(grid_from("seeds = 0\n"), ConfigError);
  EXPECT_THROW(grid_from("hist_lo = 2\nhist_hi = 1\n"), ConfigError);
  EXPECT_THROW(grid_from("sizeG = \n"), ConfigError);
  EXPECT_THROW(grid_from("nLayerD = 2, 1\n"), ConfigError);  // EBGAN point with one layer
  EXPECT_THROW(grid_from("grid_mode = true\nsizeG = 400\nsizeD = 128\nnLayerG = 2\nnLayerD = 6\n"), ConfigError);
  EXPECT_THROW(grid_from("optimizer = adam\n"), ConfigError);
}
