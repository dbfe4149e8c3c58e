#include "cts/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "cts/config.hpp"
#include "cts/errors.hpp"
#include "cts/eval.hpp"
#include "cts/io.hpp"
#include "cts/parallel.hpp"

namespace cts {
namespace {

namespace fs = std::filesystem;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pct(double fraction) { return fixed(100.0 * fraction, 1) + "%"; }

std::string mflops(std::uint64_t flops) { return fixed(static_cast<double>(flops) / 1e6, 3); }

// Right-aligned columns separated by two spaces.
class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  std::string render() const {
    std::vector<std::size_t> width(rows_.front().size(), 0);
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    std::string out;
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      std::string line;
      for (std::size_t i = 0; i < rows_[k].size(); ++i) {
        if (i) line += "  ";
        line += std::string(width[i] - rows_[k][i].size(), ' ') + rows_[k][i];
      }
      out += line + "\n";
      if (k == 0) {
        std::size_t total = 0;
        for (auto w : width) total += w;
        out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

class Report {
 public:
  explicit Report(const std::string& command) { text_ = "# cts " + command + " report\n"; }
  void kv(const std::string& key, const std::string& value) { text_ += key + "=" + value + "\n"; }
  void section(const std::string& title) { text_ += "\n[" + title + "]\n"; }
  void raw(const std::string& text) { text_ += text; }
  void table(const std::string& title, const Table& t) {
    section(title);
    text_ += t.render();
  }
  void config(const ExperimentConfig& cfg) {
    section("config");
    text_ += cfg.to_text();
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// Where a run writes its files.
fs::path run_dir(const std::string& out_dir, const fs::path& fallback, const std::string& name) {
  fs::path dir = (out_dir.empty() ? fallback : fs::path(out_dir)) / name;
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
  if (!f) throw ConfigError("failed writing " + path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

// Checkpoints carry their resolved config in `<ckpt>.config`.
void save_model(const fs::path& path, const ParamStore& params, const ExperimentConfig& cfg) {
  io::write_checkpoint(path, params.to_named());
  write_text(fs::path(path.string() + ".config"), cfg.to_text());
}

struct LoadedModel {
  ExperimentConfig config;
  ParamStore params;
};

LoadedModel load_model(const fs::path& path) {
  require_file(path, "checkpoint");
  const fs::path cfg_path(path.string() + ".config");
  require_file(cfg_path, "checkpoint config");
  return {ExperimentConfig::from_file(cfg_path), ParamStore::from_named(io::read_checkpoint(path), false)};
}

std::size_t superpatch_count(const ExperimentConfig& cfg) {
  return (cfg.vit.grid_h / 2) * (cfg.vit.grid_w / 2);
}

void check_share(std::size_t S, const ExperimentConfig& cfg) {
  if (S > superpatch_count(cfg)) {
    throw ConfigError("share " + std::to_string(S) + " exceeds the " +
                      std::to_string(superpatch_count(cfg)) + " superpatches");
  }
}

// `oracle`, `net:<ckpt>`, `random:<seed>`; bare `random` takes `fallback_seed`.
PolicySource parse_policy(const std::string& spec, std::uint64_t fallback_seed,
                          const ExperimentConfig& seg_cfg) {
  if (spec == "oracle") return PolicySource::oracle();
  if (spec == "random") return PolicySource::random(fallback_seed);
  if (spec.rfind("random:", 0) == 0) {
    const std::string s = spec.substr(7);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("bad random policy seed in '" + spec + "'");
    }
    return PolicySource::random(std::stoull(s));
  }
  if (spec.rfind("net:", 0) == 0) {
    LoadedModel m = load_model(spec.substr(4));
    if (m.config.vit.patch_size != seg_cfg.vit.patch_size) {
      throw ConfigError("policy checkpoint patch size differs from the segmenter's");
    }
    return PolicySource::net(std::move(m.params), m.config.policy);
  }
  throw ConfigError("unknown policy '" + spec + "' (expected oracle, net:<ckpt> or random:<seed>)");
}

DecoderKind parse_path(const std::string& path) {
  if (path == "eq1") return DecoderKind::Linear;
  if (path == "eq2") return DecoderKind::Spatial;
  throw ConfigError("unknown path '" + path + "' (expected eq1 or eq2)");
}

const char* path_name(DecoderKind kind) { return kind == DecoderKind::Linear ? "eq1" : "eq2"; }

Dataset load_data(const fs::path& root) {
  require_file(root / "manifest.txt", "dataset manifest");
  return read_dataset(root);
}

// Training scenes come first, the last `val_count` are held out.
std::pair<Dataset, Dataset> split(const Dataset& d, std::size_t val_count) {
  if (d.size() <= val_count) {
    throw ConfigError("dataset has " + std::to_string(d.size()) + " scenes, need more than " +
                      std::to_string(val_count));
  }
  return {d.slice(0, d.size() - val_count), d.slice(d.size() - val_count, d.size())};
}

double mean_of(const std::vector<double>& xs, std::size_t begin, std::size_t end) {
  end = std::min(end, xs.size());
  if (begin >= end) return 0.0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += xs[i];
  return s / static_cast<double>(end - begin);
}

void cost_lines(Report& r, const CostReport& c) {
  r.kv("flop_convention", kFlopConvention);
  r.kv("tokens_N", std::to_string(c.N));
  r.kv("shared_S", std::to_string(c.S));
  r.kv("tokens_M", std::to_string(c.M));
  r.kv("token_reduction", fixed(c.token_reduction, 6));
  r.kv("attention_flops", std::to_string(c.attention_flops));
  r.kv("mlp_flops", std::to_string(c.mlp_flops));
  r.kv("projection_flops", std::to_string(c.projection_flops));
  r.kv("decoder_flops", std::to_string(c.decoder_flops));
  r.kv("policy_flops", std::to_string(c.policy_flops));
  r.kv("total_flops", std::to_string(c.total_flops()));
}

std::string iou_text(double v) { return std::isnan(v) ? "n/a" : fixed(100.0 * v, 2); }

void finish(const Report& r, const fs::path& dir, std::ostream& out) {
  write_text(dir / "report.txt", r.text());
  out << r.text();
}

// ---------------------------------------------------------------------------

struct CommonFlags {
  std::string out_dir;
  std::string name;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig load_config(const std::string& path, const CommonFlags& flags,
                             const std::string& data_override) {
  require_file(path, "config");
  ExperimentConfig cfg = ExperimentConfig::from_file(path);
  if (flags.seed_set) cfg.seed = flags.seed;
  if (!data_override.empty()) cfg.data_root = data_override;
  cfg.finalize();
  return cfg;
}

int cmd_synth(const std::string& config_path, const CommonFlags& flags, std::ostream& out) {
  ExperimentConfig cfg = load_config(config_path, flags, "");
  if (flags.seed_set) cfg.data.base_seed = flags.seed;
  Dataset d = synthesize(cfg.data);
  write_dataset(cfg.data_root, d);
  SuperpatchHistogram h = superpatch_stats(d.masks, cfg.vit.patch_size);

  Report r("synth");
  r.kv("data_root", cfg.data_root.string());
  r.kv("scenes", std::to_string(d.size()));
  r.kv("train_scenes", std::to_string(d.size() - cfg.val_count));
  r.kv("val_scenes", std::to_string(cfg.val_count));
  r.kv("mean_single_class_pct", fixed(mean_of(h.percentages, 0, h.percentages.size()), 4));
  r.config(cfg);
  finish(r, run_dir(flags.out_dir, cfg.out_dir, flags.name.empty() ? cfg.name + "-synth" : flags.name),
         out);
  return 0;
}

int cmd_stats(const std::string& data, std::size_t patch_size, const CommonFlags& flags,
              std::ostream& out) {
  Dataset d = load_data(data);
  SuperpatchHistogram h = superpatch_stats(d.masks, patch_size);
  Report r("stats");
  r.kv("data", data);
  r.kv("patch_size", std::to_string(patch_size));
  r.kv("images", std::to_string(h.total()));
  r.kv("mean_single_class_pct", fixed(mean_of(h.percentages, 0, h.percentages.size()), 4));
  Table t({"bin", "single-class %", "images", "share"});
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    const std::string range = b + 1 == kHistogramBins
                                  ? "[" + std::to_string(5 * b) + ",100]"
                                  : "[" + std::to_string(5 * b) + "," + std::to_string(5 * b + 5) + ")";
    const double frac = h.total() ? static_cast<double>(h.counts[b]) / static_cast<double>(h.total()) : 0.0;
    t.add({std::to_string(b), range, std::to_string(h.counts[b]), pct(frac)});
  }
  r.table("histogram", t);
  finish(r, run_dir(flags.out_dir, "runs", flags.name.empty() ? "stats" : flags.name), out);
  return 0;
}

int cmd_train_policy(const std::string& config_path, const std::string& data,
                     const CommonFlags& flags, std::ostream& out) {
  ExperimentConfig cfg = load_config(config_path, flags, data);
  auto [train, val] = split(load_data(cfg.data_root), cfg.val_count);
  PolicyTrainLog log;
  ParamStore params = train_policy(train, cfg.policy, &log);
  const fs::path dir =
      run_dir(flags.out_dir, cfg.out_dir, flags.name.empty() ? cfg.name + "-policy" : flags.name);
  save_model(dir / "policy.ctsf", params, cfg);

  const std::size_t S = superpatch_count(cfg) / 4;
  double trained = 0.0, random = 0.0, base = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    PolicyGroundTruth gt = gt_policy(val.masks[i], cfg.vit.patch_size);
    trained += precision(select_top_s(policy_forward(val.images[i], params, cfg.policy), S), gt);
    Rng rng(mix_seed(cfg.seed, i));
    random += precision(random_policy(gt.rows, gt.cols, S, rng), gt);
    base += static_cast<double>(gt.count_true()) / static_cast<double>(gt.single.size());
  }
  const double n = static_cast<double>(val.size());

  Report r("train-policy");
  r.kv("checkpoint", (dir / "policy.ctsf").string());
  r.kv("train_scenes", std::to_string(train.size()));
  r.kv("val_scenes", std::to_string(val.size()));
  r.kv("iterations", std::to_string(cfg.policy.iterations));
  r.kv("loss_first10", fixed(mean_of(log.losses, 0, 10), 6));
  r.kv("loss_last10", fixed(mean_of(log.losses, log.losses.size() - std::min<std::size_t>(10, log.losses.size()),
                                    log.losses.size()),
                            6));
  r.kv("policy_macs", std::to_string(policy_macs(cfg.policy, cfg.data.height, cfg.data.width)));
  Table t({"policy", "S", "precision"});
  t.add({"trained", std::to_string(S), fixed(trained / n, 4)});
  t.add({"random", std::to_string(S), fixed(random / n, 4)});
  t.add({"base-rate", "-", fixed(base / n, 4)});
  r.table("precision at 25% of superpatches", t);
  r.config(cfg);
  finish(r, dir, out);
  return 0;
}

int cmd_train_seg(const std::string& config_path, const std::string& data,
                  const std::string& policy_spec, std::size_t S, const std::string& path,
                  const CommonFlags& flags, std::ostream& out) {
  ExperimentConfig cfg = load_config(config_path, flags, data);
  if (!path.empty()) cfg.decoder = parse_path(path);
  check_share(S, cfg);
  PolicySource source = parse_policy(policy_spec, cfg.seed, cfg);
  auto [train, val] = split(load_data(cfg.data_root), cfg.val_count);
  const SegConfig seg = cfg.seg_config();
  SegTrainLog log;
  ParamStore params = train_segmenter(train, source, S, seg, cfg.seg, &log);
  const std::string kind = policy_spec.substr(0, policy_spec.find(':'));
  const fs::path dir = run_dir(
      flags.out_dir, cfg.out_dir,
      flags.name.empty() ? cfg.name + "-seg-" + kind + "-s" + std::to_string(S) : flags.name);
  save_model(dir / "seg.ctsf", params, cfg);
  SegEvaluation ev = evaluate_segmenter(val, source, S, params, seg, env_thread_count());

  Report r("train-seg");
  r.kv("checkpoint", (dir / "seg.ctsf").string());
  r.kv("policy", policy_spec);
  r.kv("path", path_name(cfg.decoder));
  r.kv("train_scenes", std::to_string(train.size()));
  r.kv("val_scenes", std::to_string(val.size()));
  r.kv("iterations", std::to_string(cfg.seg.iterations));
  r.kv("loss_first10", fixed(mean_of(log.losses, 0, 10), 6));
  r.kv("loss_last10", fixed(mean_of(log.losses, log.losses.size() - std::min<std::size_t>(10, log.losses.size()),
                                    log.losses.size()),
                            6));
  r.kv("val_miou", fixed(100.0 * ev.miou, 4));
  cost_lines(r, flop_model(seg, S, source.kind() == PolicySource::Kind::Net ? &source.net_config() : nullptr));
  r.config(cfg);
  finish(r, dir, out);
  return 0;
}

int cmd_eval(const std::string& ckpt, std::size_t S, const std::string& path,
             const std::string& policy_spec, const std::string& data, const CommonFlags& flags,
             std::ostream& out) {
  LoadedModel m = load_model(ckpt);
  ExperimentConfig& cfg = m.config;
  if (!path.empty() && parse_path(path) != cfg.decoder) {
    throw ConfigError("checkpoint was trained for path " + std::string(path_name(cfg.decoder)) +
                      ", not " + path);
  }
  check_share(S, cfg);
  const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.seed;
  PolicySource source = parse_policy(policy_spec, seed, cfg);
  // An explicit --data directory is evaluated whole.
  Dataset eval_set = data.empty() ? split(load_data(cfg.data_root), cfg.val_count).second : load_data(data);
  const SegConfig seg = cfg.seg_config();
  SegEvaluation ev = evaluate_segmenter(eval_set, source, S, m.params, seg, env_thread_count());

  ConfusionMatrix cm(seg.num_classes), voted(seg.num_classes);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    cm.add(ev.predictions[i], eval_set.masks[i]);
    changed += majority_vote_changes(ev.predictions[i], ev.policies[i]);
    voted.add(majority_vote(ev.predictions[i], ev.policies[i]), eval_set.masks[i]);
  }

  Report r("eval");
  r.kv("checkpoint", ckpt);
  r.kv("policy", policy_spec);
  r.kv("path", path_name(cfg.decoder));
  r.kv("images", std::to_string(eval_set.size()));
  r.kv("miou", fixed(100.0 * ev.miou, 4));
  r.kv("vote_changed_pixels", std::to_string(changed));
  r.kv("vote_miou", fixed(100.0 * voted.miou(), 4));
  r.kv("vote_miou_delta", fixed(100.0 * (voted.miou() - ev.miou), 4));
  cost_lines(r, flop_model(seg, S, source.kind() == PolicySource::Kind::Net ? &source.net_config() : nullptr));
  Table t({"class", "IoU"});
  for (int c = 0; c < seg.num_classes; ++c) t.add({std::to_string(c), iou_text(cm.iou(c))});
  r.table("per-class IoU", t);
  r.config(cfg);
  finish(r, run_dir(flags.out_dir, cfg.out_dir,
                    flags.name.empty() ? cfg.name + "-eval-s" + std::to_string(S) : flags.name),
         out);
  return 0;
}

// Accepts absolute S values or token-reduction percentages such as `30%`.
std::vector<std::size_t> parse_schedule(const std::string& text, const ExperimentConfig& cfg) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  const double n = static_cast<double>(cfg.vit.num_patches());
  while (std::getline(ss, item, ',')) {
    if (!item.empty() && item.back() == '%') {
      double p = 0.0;
      try {
        p = std::stod(item.substr(0, item.size() - 1));
      } catch (const std::exception&) {
        throw ConfigError("bad schedule entry '" + item + "'");
      }
      if (p < 0.0) throw ConfigError("bad schedule entry '" + item + "'");
      out.push_back(static_cast<std::size_t>(std::lround(p / 100.0 * n / 3.0)));
    } else {
      out.push_back(parse_size_list(item).front());
    }
  }
  if (out.empty()) throw ConfigError("empty share schedule");
  for (auto s : out) check_share(s, cfg);
  return out;
}

int cmd_bench(const std::string& ckpt, const std::string& schedule_text,
              const std::string& policy_spec, const std::string& data, const BenchProtocol& protocol,
              std::size_t repeats, const CommonFlags& flags, std::ostream& out) {
  LoadedModel m = load_model(ckpt);
  ExperimentConfig& cfg = m.config;
  const std::vector<std::size_t> schedule = parse_schedule(schedule_text, cfg);
  const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.seed;
  PolicySource source = parse_policy(policy_spec, seed, cfg);
  Dataset images = data.empty() ? split(load_data(cfg.data_root), cfg.val_count).second : load_data(data);
  if (images.size() == 0) throw ConfigError("bench needs at least one image");
  if (repeats == 0) throw ConfigError("repeats must be >= 1");
  const SegConfig seg = cfg.seg_config();
  const PolicyNetConfig* pc = source.kind() == PolicySource::Kind::Net ? &source.net_config() : nullptr;

  Report r("bench");
  r.kv("checkpoint", ckpt);
  r.kv("policy", policy_spec);
  r.kv("path", path_name(cfg.decoder));
  r.kv("protocol", std::to_string(protocol.warmup) + " warm-up, " + std::to_string(protocol.iters) +
                       " measured, batch " + std::to_string(protocol.batch) + ", median of " +
                       std::to_string(repeats));
  r.kv("flop_convention", kFlopConvention);
  Table t({"S", "M", "reduction", "attn MFLOPs", "total MFLOPs"});
  std::string timing;
  for (auto S : schedule) {
    CostReport c = flop_model(seg, S, pc);
    t.add({std::to_string(S), std::to_string(c.M), pct(c.token_reduction), mflops(c.attention_flops),
           mflops(c.total_flops())});
    std::vector<double> rates;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      BenchResult b = benchmark(
          [&](std::size_t it) {
            for (std::size_t k = 0; k < protocol.batch; ++k) {
              const std::size_t i = (it * protocol.batch + k) % images.size();
              SharingPolicy p = source.make(images.images[i], &images.masks[i], S, cfg.vit.patch_size, i);
              run_segmenter(images.images[i], p, m.params, seg);
            }
          },
          protocol);
      rates.push_back(b.images_per_sec);
    }
    std::sort(rates.begin(), rates.end());
    timing += "# timing S=" + std::to_string(S) + " images_per_sec=" + fixed(rates[rates.size() / 2], 2) + "\n";
  }
  r.table("schedule", t);
  r.raw(timing);
  r.raw("# timing hardware=" + hardware_string() + "\n");
  r.config(cfg);
  finish(r, run_dir(flags.out_dir, cfg.out_dir, flags.name.empty() ? cfg.name + "-bench" : flags.name),
         out);
  return 0;
}

int cmd_dynamic(const std::string& models_text, const std::string& policy_ckpt,
                const std::string& taus_text, const std::string& data, const CommonFlags& flags,
                std::ostream& out) {
  std::map<std::size_t, ParamStore> models;
  std::map<std::size_t, std::string> paths;
  ExperimentConfig cfg;
  bool first = true;
  std::stringstream ss(models_text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("model entry '" + item + "' is not S=ckpt");
    const std::size_t S = parse_size_list(item.substr(0, eq)).front();
    LoadedModel m = load_model(item.substr(eq + 1));
    if (first) {
      cfg = m.config;
      first = false;
    } else if (m.config.seg_config().vit.embed_dim != cfg.vit.embed_dim ||
               m.config.vit.depth != cfg.vit.depth || m.config.decoder != cfg.decoder ||
               m.config.vit.num_patches() != cfg.vit.num_patches()) {
      throw ConfigError("model " + item + " has a different architecture");
    }
    check_share(S, cfg);
    if (!models.emplace(S, std::move(m.params)).second) {
      throw ConfigError("setting S=" + std::to_string(S) + " listed twice");
    }
    paths[S] = item.substr(eq + 1);
  }
  if (models.empty()) throw ConfigError("no models given");
  std::vector<double> taus;
  {
    std::stringstream ts(taus_text);
    while (std::getline(ts, item, ',')) {
      try {
        std::size_t pos = 0;
        taus.push_back(std::stod(item, &pos));
        if (pos != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("bad tau '" + item + "'");
      }
    }
    if (taus.empty()) throw ConfigError("no tau given");
  }
  LoadedModel policy = load_model(policy_ckpt);
  Dataset eval_set = data.empty() ? split(load_data(cfg.data_root), cfg.val_count).second : load_data(data);
  const SegConfig seg = cfg.seg_config();
  const std::size_t threads = env_thread_count();

  std::vector<PolicyScores> scores;
  for (const auto& img : eval_set.images) scores.push_back(policy_forward(img, policy.params, policy.config.policy));
  PolicySource source = PolicySource::net(policy.params, policy.config.policy);

  Report r("dynamic");
  r.kv("policy_checkpoint", policy_ckpt);
  r.kv("images", std::to_string(eval_set.size()));
  Table mt({"S", "reduction", "mIoU", "checkpoint"});
  for (const auto& [S, params] : models) {
    SegEvaluation ev = evaluate_segmenter(eval_set, source, S, params, seg, threads);
    mt.add({std::to_string(S), pct(3.0 * static_cast<double>(S) / static_cast<double>(cfg.vit.num_patches())),
            fixed(100.0 * ev.miou, 2), paths[S]});
  }
  r.table("fixed settings", mt);

  std::vector<std::string> header{"tau"};
  for (const auto& [S, p] : models) header.push_back("n(S=" + std::to_string(S) + ")");
  header.push_back("avg reduction");
  header.push_back("mIoU");
  Table rt(header);
  for (double tau : taus) {
    DynamicReport d = dynamic_eval(models, seg, scores, tau, eval_set, threads);
    std::vector<std::string> row{fixed(tau, 3)};
    for (const auto& [S, p] : models) row.push_back(std::to_string(d.images_per_setting[S]));
    row.push_back(pct(d.average_token_reduction));
    row.push_back(fixed(100.0 * d.combined_miou, 2));
    rt.add(row);
  }
  r.table("dynamic routing", rt);
  r.config(cfg);
  finish(r, run_dir(flags.out_dir, cfg.out_dir, flags.name.empty() ? cfg.name + "-dynamic" : flags.name),
         out);
  return 0;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cts: token sharing experiments for ViT segmentation", "cts"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", flags.out_dir, "Output root (default: config out_dir)");
    sub->add_option("--name", flags.name, "Run directory name under the output root");
    sub->add_option("--seed", flags.seed, "Seed overriding the config")->each([&](const std::string&) {
      flags.seed_set = true;
    });
  };

  std::string config, data, policy = "oracle", path, seg_ckpt, schedule, models, taus = "0.4";
  std::size_t share = 0, patch_size = 0, repeats = 1;
  BenchProtocol protocol;

  auto* synth = app.add_subcommand("synth", "Write the synthetic dataset");
  synth->add_option("--config", config, "Experiment config")->required();
  common(synth);

  auto* stats = app.add_subcommand("stats", "Histogram of single-class superpatches");
  stats->add_option("--data", data, "Dataset directory")->required();
  stats->add_option("--patch-size", patch_size, "Patch size P")->required()->check(CLI::PositiveNumber);
  common(stats);

  auto* tpol = app.add_subcommand("train-policy", "Train the policy network");
  tpol->add_option("--config", config, "Experiment config")->required();
  tpol->add_option("--data", data, "Dataset directory (default: config data_root)");
  common(tpol);

  auto* tseg = app.add_subcommand("train-seg", "Train a segmenter at one sharing setting");
  tseg->add_option("--config", config, "Experiment config")->required();
  tseg->add_option("--policy", policy, "oracle | net:<ckpt> | random:<seed>")->required();
  tseg->add_option("--share", share, "Shared superpatches S")->required();
  tseg->add_option("--path", path, "eq1 | eq2 (default: config decoder)");
  tseg->add_option("--data", data, "Dataset directory (default: config data_root)");
  common(tseg);

  auto* eval = app.add_subcommand("eval", "mIoU and cost of a segmenter checkpoint");
  eval->add_option("--seg", seg_ckpt, "Segmenter checkpoint")->required();
  eval->add_option("--share", share, "Shared superpatches S")->required();
  eval->add_option("--path", path, "eq1 | eq2, must match the checkpoint");
  eval->add_option("--policy", policy, "oracle | net:<ckpt> | random[:<seed>]");
  eval->add_option("--data", data, "Dataset directory (default: validation split)");
  common(eval);

  auto* bench = app.add_subcommand("bench", "FLOPs and throughput across a share schedule");
  bench->add_option("--seg", seg_ckpt, "Segmenter checkpoint")->required();
  bench->add_option("--share-schedule", schedule, "S values or reductions, e.g. 0,26,64 or 0%,30%,75%")
      ->required();
  bench->add_option("--policy", policy, "oracle | net:<ckpt> | random[:<seed>]");
  bench->add_option("--data", data, "Dataset directory (default: validation split)");
  bench->add_option("--warmup", protocol.warmup, "Untimed iterations");
  bench->add_option("--iters", protocol.iters, "Timed iterations")->check(CLI::PositiveNumber);
  bench->add_option("--batch", protocol.batch, "Images per iteration")->check(CLI::PositiveNumber);
  bench->add_option("--repeats", repeats, "Runs per setting; the median is reported")
      ->check(CLI::PositiveNumber);
  common(bench);

  auto* dyn = app.add_subcommand("dynamic", "Per-image routing across sharing settings");
  dyn->add_option("--models", models, "S=ckpt list, must include S=0")->required();
  dyn->add_option("--policy", seg_ckpt, "Policy checkpoint")->required();
  dyn->add_option("--tau", taus, "Threshold or comma-separated thresholds");
  dyn->add_option("--data", data, "Dataset directory (default: validation split)");
  common(dyn);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "cts: error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*synth) return cmd_synth(config, flags, out);
    if (*stats) return cmd_stats(data, patch_size, flags, out);
    if (*tpol) return cmd_train_policy(config, data, flags, out);
    if (*tseg) return cmd_train_seg(config, data, policy, share, path, flags, out);
    if (*eval) return cmd_eval(seg_ckpt, share, path, policy, data, flags, out);
    if (*bench) return cmd_bench(seg_ckpt, schedule, policy, data, protocol, repeats, flags, out);
    if (*dyn) return cmd_dynamic(models, seg_ckpt, taus, data, flags, out);
  } catch (const std::exception& e) {
    err << "cts: error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cts
