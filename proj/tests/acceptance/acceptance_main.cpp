// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
//   acceptance [--only 1,4,...] [--tmp DIR]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cts/config.hpp"
#include "cts/eval.hpp"
#include "cts/ops.hpp"
#include "cts/runtime.hpp"
#include "cts/sharing.hpp"
#include "support/cli_harness.hpp"
#include "support/gradcheck.hpp"

namespace cts {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Desk-scale experiment shared by criteria 4, 6, 7, 8 and 10. Built lazily.
class Desk {
 public:
  Desk() {
    DatasetSpec spec;  // 200 scenes of 64x64, P=4, C=5
    Dataset all = synthesize(spec);
    train_ = all.slice(0, 150);
    val_ = all.slice(150, 200);
    seg_.vit.depth = 2;
    seg_.vit.embed_dim = 32;
    seg_.vit.heads = 4;
  }
  static constexpr std::size_t kShare30 = 26;  // 78 of 256 tokens
  static constexpr std::size_t kSeeds = 3;

  const Dataset& train() const { return train_; }
  const Dataset& val() const { return val_; }
  const SegConfig& seg_config() const { return seg_; }

  SegTrainConfig train_config(std::uint64_t seed) const {
    SegTrainConfig t;
    t.iterations = 300;
    t.batch_size = 4;
    t.lr = 0.05;
    t.seed = seed;
    return t;
  }

  // kind: "base" (S=0), "oracle" or "random" at 30% reduction.
  const ParamStore& model(const std::string& kind, std::uint64_t seed) {
    auto key = kind + std::to_string(seed);
    auto it = models_.find(key);
    if (it != models_.end()) return it->second;
    ParamStore p = train_segmenter(train_, source(kind, seed), kind == "base" ? 0 : kShare30, seg_,
                                   train_config(seed));
    return models_.emplace(key, std::move(p)).first->second;
  }

  static PolicySource source(const std::string& kind, std::uint64_t seed) {
    return kind == "random" ? PolicySource::random(mix_seed(seed, 0x5eed)) : PolicySource::oracle();
  }

  double miou(const std::string& kind, std::uint64_t seed) {
    auto key = kind + std::to_string(seed);
    auto it = mious_.find(key);
    if (it != mious_.end()) return it->second;
    const double m = evaluate_segmenter(val_, source(kind, seed), kind == "base" ? 0 : kShare30,
                                        model(kind, seed), seg_)
                         .miou;
    return mious_.emplace(key, m).first->second;
  }

  const ParamStore& policy(std::uint64_t seed) {
    auto it = policies_.find(seed);
    if (it != policies_.end()) return it->second;
    return policies_.emplace(seed, train_policy(train_, policy_config(seed))).first->second;
  }

  static PolicyNetConfig policy_config(std::uint64_t seed) {
    PolicyNetConfig c;  // widths 16,32,64,64; 300 iterations of batch 8
    c.seed = seed;
    return c;
  }

 private:
  Dataset train_, val_;
  SegConfig seg_;
  std::map<std::string, ParamStore> models_;
  std::map<std::string, double> mious_;
  std::map<std::uint64_t, ParamStore> policies_;
};

Outcome token_arithmetic() {
  const auto t0 = Clock::now();
  // Table 1 rows: S, M, rounded reduction percent.
  const std::vector<std::array<std::size_t, 3>> rows{
      {0, 1024, 0},    {31, 931, 9},    {41, 901, 12},   {79, 787, 23},  {103, 715, 30},
      {131, 631, 38},  {156, 556, 46},  {192, 448, 56},  {224, 352, 66}, {256, 256, 75}};
  Rng rng(1);
  Image img{testing::random_tensor({3, 128, 128}, rng, 0.0, 1.0)};
  PatchGrid g = partition(img, 4);
  Tensor pos = testing::random_tensor({1024, 8}, rng), w = testing::random_tensor({48, 8}, rng),
         b = testing::random_tensor({8}, rng);
  std::size_t bad = 0;
  for (auto [s, m, p] : rows) {
    TokenSet t = share(g, pos, random_policy(16, 16, s, rng), w, b);
    const long rounded = std::lround(100.0 * 3.0 * static_cast<double>(s) / 1024.0);
    if (t.size() != m || t.size() != 1024 - 3 * s || rounded != static_cast<long>(p)) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 1.0,
          std::to_string(rows.size() - bad) + "/" + std::to_string(rows.size()) +
              " rows match (M, reduction%), " + fmt("%.2fs", secs)};
}

Outcome gt_oracle() {
  const auto t0 = Clock::now();
  DatasetSpec spec;
  spec.count = 200;
  spec.base_seed = 77;
  Dataset d = synthesize(spec);
  std::size_t mismatches = 0, cells = 0;
  for (const auto& m : d.masks) {
    PolicyGroundTruth gt = gt_policy(m, 4);
    for (std::size_t r = 0; r < m.height / 8; ++r)
      for (std::size_t c = 0; c < m.width / 8; ++c) {
        std::set<std::uint16_t> classes;
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) classes.insert(m.at(r * 8 + y, c * 8 + x));
        mismatches += (classes.size() == 1) != static_cast<bool>(gt.at(r, c));
        ++cells;
      }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(mismatches) + " mismatches over " + std::to_string(cells) +
              " superpatches of 200 masks, " + fmt("%.2fs", secs)};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  auto cases = testing::op_grad_cases();
  cases.push_back(testing::vit_block_case());
  {
    // Token sharing and unsharing with projection, position mean and gelu.
    Rng rng(3);
    auto img = std::make_shared<Image>(Image{testing::random_tensor({3, 16, 16}, rng, 0.0, 1.0)});
    std::vector<std::size_t> shared{1, 2};
    auto policy = SharingPolicy::from_indices(2, 2, shared);
    testing::GradCase share_case{
        "share_unshare",
        [](Rng& g) {
          return std::vector<Tensor>{testing::random_tensor({16, 3}, g), testing::random_tensor({48, 3}, g),
                                     testing::random_tensor({3}, g)};
        },
        [img, policy](const std::vector<Tensor>& p) {
          TokenSet t = share(partition(*img, 4), p[0], policy, p[1], p[2]);
          return to_spatial(unshare_tokens(gelu(add(t.tokens, t.pos_embeds)), t.layout), 4, 4);
        }};
    cases.push_back(share_case);
  }
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(mix_seed(seed, 0xacce));
      auto r = testing::grad_check(c.fn, c.inputs(rng), rng);
      checked += r.checked;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_name = c.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          std::to_string(cases.size()) + " cases x 10 seeds, " + std::to_string(checked) +
              " partials, max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " +
              fmt("%.1fs", secs)};
}

SegMask slot_argmax(const Tensor& slot_scores, std::size_t gh, std::size_t gw) {
  const std::size_t C = slot_scores.dim(1);
  SegMask m(gh, gw);
  for (std::size_t i = 0; i < gh * gw; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (slot_scores[i * C + c] > slot_scores[i * C + best]) best = c;
    m.labels[i] = static_cast<std::uint16_t>(best);
  }
  return m;
}

SegMask upsample_nearest(const SegMask& m, std::size_t f) {
  SegMask out(m.height * f, m.width * f);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.labels[y * out.width + x] = m.at(y / f, x / f);
  return out;
}

Outcome eq1_consistency(Desk& desk) {
  const ParamStore& params = desk.model("oracle", 0);
  const SegConfig& cfg = desk.seg_config();
  const std::size_t gh = cfg.vit.grid_h, gw = cfg.vit.grid_w, P = cfg.vit.patch_size;
  std::size_t slot_changes = 0, pixel_changes = 0, pixels = 0;
  double worst_delta = 0.0;
  // Every S up to 30% reduction: 3S/256 <= 0.30.
  for (std::size_t S : {8, 10, 20, 25}) {
    std::vector<SegMask> plain, voted, gts;
    for (std::size_t i = 0; i < 20; ++i) {
      const Image& img = desk.val().images[i];
      const SegMask& gt = desk.val().masks[i];
      SharingPolicy policy = select_top_s(gt_as_scores(gt_policy(gt, P)), S);
      SegOutput o = pipeline_eq1(img, policy, params, cfg);
      SegMask slots = slot_argmax(o.slot_scores, gh, gw);
      slot_changes += majority_vote_changes(slots, policy);
      plain.push_back(upsample_nearest(slots, P));
      voted.push_back(upsample_nearest(majority_vote(slots, policy), P));
      gts.push_back(gt);
      SegMask px = argmax_mask(o.pixel_scores);
      pixel_changes += majority_vote_changes(px, policy);
      pixels += px.labels.size();
    }
    worst_delta = std::max(worst_delta, std::abs(miou(voted, gts, cfg.num_classes) -
                                                 miou(plain, gts, cfg.num_classes)));
  }
  return {slot_changes == 0 && worst_delta == 0.0,
          "S in {8,10,20,25} x 20 images: " + std::to_string(slot_changes) +
              " patch-slot predictions changed, mIoU delta " + fmt("%.1f", 100.0 * worst_delta) +
              "; after bilinear upsampling " + std::to_string(pixel_changes) + "/" +
              std::to_string(pixels) + " pixels would change"};
}

Outcome constant_round_trip() {
  std::size_t images = 0, mismatched = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(mix_seed(seed, 5));
    const std::size_t S = seed % 2 ? rng.below(65) : (seed % 4 == 0 ? 64 : 26);
    SharingPolicy policy = random_policy(8, 8, S, rng);
    Tensor px = testing::random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    auto d = px.mutable_data();
    for (auto [r, c] : policy.ordered_shared)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = rng.uniform();
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) d[(ch * 64 + r * 8 + y) * 64 + c * 8 + x] = v;
      }
    Image img{px};
    PatchGrid g = partition(img, 4);
    Image back = unshare_pixels(token_pixels(g, make_layout(policy, 16, 16)), make_layout(policy, 16, 16), 4);
    ++images;
    for (std::size_t i = 0; i < px.numel(); ++i)
      if (back.pixels[i] != px[i]) {
        ++mismatched;
        break;
      }
  }
  return {mismatched == 0,
          std::to_string(images - mismatched) + "/" + std::to_string(images) + " images reproduced bit-exactly"};
}

Outcome ordering(Desk& desk) {
  const auto t0 = Clock::now();
  std::vector<double> base, oracle, random;
  for (std::uint64_t s = 0; s < Desk::kSeeds; ++s) {
    base.push_back(100.0 * desk.miou("base", s));
    oracle.push_back(100.0 * desk.miou("oracle", s));
    random.push_back(100.0 * desk.miou("random", s));
  }
  const double b = median(base), o = median(oracle), r = median(random);
  const double secs = seconds_since(t0);
  return {o >= r + 0.5 && std::abs(b - o) <= 2.0 && secs < 1800.0,
          "median mIoU over 3 seeds: S=0 " + fmt("%.2f", b) + ", oracle 30% " + fmt("%.2f", o) +
              ", random 30% " + fmt("%.2f", r) + " (gap " + fmt("%.2f", o - r) + ", |base-oracle| " +
              fmt("%.2f", std::abs(b - o)) + "), " + fmt("%.0fs", secs)};
}

Outcome learnability(Desk& desk) {
  const auto t0 = Clock::now();
  std::vector<double> trained, rnd, margins;
  double base_rate = 0.0;
  const std::size_t S = 16;  // 25% of 64 superpatches
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ParamStore& p = desk.policy(seed);
    const PolicyNetConfig cfg = Desk::policy_config(seed);
    double t = 0.0, r = 0.0, br = 0.0;
    for (std::size_t i = 0; i < desk.val().size(); ++i) {
      PolicyGroundTruth gt = gt_policy(desk.val().masks[i], 4);
      t += precision(select_top_s(policy_forward(desk.val().images[i], p, cfg), S), gt);
      Rng rng(mix_seed(seed, i));
      r += precision(random_policy(8, 8, S, rng), gt);
      br += static_cast<double>(gt.count_true()) / 64.0;
    }
    const double n = static_cast<double>(desk.val().size());
    trained.push_back(t / n);
    rnd.push_back(r / n);
    margins.push_back((t - r) / n);
    base_rate = br / n;
  }
  const double secs = seconds_since(t0);
  const double m = median(margins);
  return {m >= 0.15 && secs < 600.0,
          "5-seed median precision at S=16: trained " + fmt("%.3f", median(trained)) + ", random " +
              fmt("%.3f", median(rnd)) + ", base rate " + fmt("%.3f", base_rate) + ", margin " +
              fmt("%.3f", m) + ", " + fmt("%.0fs", secs)};
}

Outcome throughput(Desk& desk) {
  SegConfig cfg;  // desk model: depth 4, E 64
  ParamStore params = init_seg_params(cfg, 0);
  PolicySource source = PolicySource::net(desk.policy(0).clone(), Desk::policy_config(0));
  const std::vector<std::size_t> settings{0, 26, 64};
  std::map<std::size_t, std::vector<double>> rates;
  const BenchProtocol protocol{50, 100, 1};
  for (int run = 0; run < 3; ++run) {
    for (auto S : settings) {
      BenchResult r = benchmark(
          [&](std::size_t it) {
            const std::size_t i = it % desk.val().size();
            const Image& img = desk.val().images[i];
            run_segmenter(img, source.make(img, nullptr, S, 4, i), params, cfg);
          },
          protocol);
      rates[S].push_back(r.images_per_sec);
    }
  }
  const double a = median(rates[0]), b = median(rates[26]), c = median(rates[64]);
  return {a < b && b < c,
          "median im/s over 3 runs (50 warm-up, 100 timed, policy net included): S=0 " + fmt("%.1f", a) +
              ", S=26 " + fmt("%.1f", b) + ", S=64 " + fmt("%.1f", c)};
}

Outcome flop_model_check() {
  SegConfig c;
  ViTConfig big = c.vit;
  big.grid_h = big.grid_w = 40;  // N = 1600; S = 160 removes 480 tokens = 30%
  const double exact = static_cast<double>(attention_quadratic_flops(big, 1120)) /
                       static_cast<double>(attention_quadratic_flops(big, 1600));
  ViTConfig table = c.vit;
  table.grid_h = table.grid_w = 32;  // N = 1024, S = 103
  const double rounded = static_cast<double>(attention_quadratic_flops(table, 715)) /
                         static_cast<double>(attention_quadratic_flops(table, 1024));
  bool monotone = true;
  std::uint64_t prev_total = UINT64_MAX, prev_attn = UINT64_MAX;
  PolicyNetConfig pc;
  for (auto S : std::vector<std::size_t>{0, 8, 10, 20, 26, 33, 39, 48, 56, 64}) {
    CostReport r = flop_model(c, S, S ? &pc : nullptr);
    CostReport plain = flop_model(c, S, nullptr);
    monotone &= plain.total_flops() < prev_total && r.attention_flops < prev_attn;
    prev_total = plain.total_flops();
    prev_attn = r.attention_flops;
  }
  return {exact == 0.49 && std::round(rounded * 100.0) == 49.0 && monotone,
          "quadratic ratio " + fmt("%.15g", exact) + " at N=1600/M=1120, " + fmt("%.4f", rounded) +
              " at 1024/715; schedule " + (monotone ? "monotone" : "NOT monotone")};
}

Outcome dynamic_routing(Desk& desk) {
  // Scores (j + 0.5)/64 on an 8x8 grid: the count above tau is fixed by hand.
  PolicyScores ramp{8, 8, {}};
  for (int j = 0; j < 64; ++j) ramp.values.push_back((j + 0.5) / 64.0);
  const std::vector<std::size_t> settings{0, 8, 10, 20, 26, 33, 39, 48, 56, 64};
  const std::vector<std::pair<double, std::size_t>> documented{
      {0.35, 39}, {0.40, 33}, {0.45, 33}, {0.50, 26}, {0.55, 26}, {0.60, 20}, {0.65, 20}};
  std::size_t wrong = 0;
  for (auto [tau, want] : documented) wrong += dynamic_select(ramp, tau, settings) != want;
  PolicyScores ones{8, 8, std::vector<double>(64, 1.0)}, zeros{8, 8, std::vector<double>(64, 0.0)};
  wrong += dynamic_select(ones, 0.5, settings) != 56;
  wrong += dynamic_select(zeros, 0.5, settings) != 0;

  std::map<std::size_t, ParamStore> models{{0, desk.model("base", 0).clone()},
                                           {Desk::kShare30, desk.model("oracle", 0).clone()}};
  std::vector<PolicyScores> scores;
  for (const auto& img : desk.val().images)
    scores.push_back(policy_forward(img, desk.policy(0), Desk::policy_config(0)));
  std::size_t bad_partitions = 0;
  for (auto [tau, want] : documented) {
    DynamicReport r = dynamic_eval(models, desk.seg_config(), scores, tau, desk.val());
    std::size_t total = 0;
    for (auto [s, n] : r.images_per_setting) total += n;
    bad_partitions += total != desk.val().size();
  }
  DynamicReport inf = dynamic_eval(models, desk.seg_config(), scores, INFINITY, desk.val());
  const double base = desk.miou("base", 0);
  return {wrong == 0 && bad_partitions == 0 && inf.combined_miou == base,
          std::to_string(documented.size() + 2 - wrong) + "/" + std::to_string(documented.size() + 2) +
              " documented choices, " + std::to_string(documented.size() - bad_partitions) + "/" +
              std::to_string(documented.size()) + " routings partition the 50 images, tau=inf mIoU " +
              fmt("%.6f", inf.combined_miou) + " vs S=0 model " + fmt("%.6f", base)};
}

Outcome determinism(const std::filesystem::path& dir) {
  std::filesystem::remove_all(dir);
  std::size_t ok = 0;
  std::string failed;
  auto cases = testing::cli_determinism(dir);
  for (const auto& c : cases) {
    if (c.ok && c.same) ++ok;
    else failed += " " + c.command;
  }
  return {ok == cases.size(), std::to_string(ok) + "/" + std::to_string(cases.size()) +
                                  " commands byte-identical modulo # timing" +
                                  (failed.empty() ? "" : "; differ:" + failed)};
}

}  // namespace
}  // namespace cts

int main(int argc, char** argv) {
  cts::tune_allocator();
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string tmp = (std::filesystem::temp_directory_path() / "cts_acceptance").string();
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--tmp", tmp, "Scratch directory for CLI runs");
  CLI11_PARSE(app, argc, argv);

  cts::Desk desk;
  const std::vector<std::pair<std::string, std::function<cts::Outcome()>>> criteria{
      {"token arithmetic", [] { return cts::token_arithmetic(); }},
      {"policy ground-truth oracle", [] { return cts::gt_oracle(); }},
      {"gradient suite", [] { return cts::gradients(); }},
      {"eq1 majority-vote consistency", [&] { return cts::eq1_consistency(desk); }},
      {"constant-superpatch round trip", [] { return cts::constant_round_trip(); }},
      {"oracle vs random ordering", [&] { return cts::ordering(desk); }},
      {"policy learnability", [&] { return cts::learnability(desk); }},
      {"throughput ordering", [&] { return cts::throughput(desk); }},
      {"flop model", [] { return cts::flop_model_check(); }},
      {"dynamic routing", [&] { return cts::dynamic_routing(desk); }},
      {"cli determinism", [&] { return cts::determinism(tmp); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    cts::Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
