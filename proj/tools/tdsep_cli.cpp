// Copyright 2026 The tdsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: synth, train, evaluate, rf, params.
//
// Exit codes: 0 success, 2 configuration/usage error, 1 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "tdsep/tdsep.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string variant;
  long long seed = -1;
  std::string out = "out";
};

tdsep::RunConfig resolve_config(const CommonOptions& o) {
  tdsep::RunConfig cfg = o.config.empty() ? tdsep::RunConfig{} : tdsep::load_config(o.config);
  if (!o.variant.empty()) cfg.separator.variant = tdsep::parse_variant(o.variant);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "TOML-style key = value config file");
  cmd->add_option("--variant", o.variant, "separator variant: porta, py, sh, pa, su");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
}

struct SynthOptions {
  std::string corpus;
  std::size_t toy_speakers = 0;
  std::size_t toy_utts = 4;
  double toy_seconds = 2.0;
  std::size_t pairs = 100;
  double snr_lo = 0.0;
  double snr_hi = 5.0;
  double valid_frac = 0.1;
  double test_frac = 0.1;
  bool no_audio = false;
};

int run_synth(const CommonOptions& common, const SynthOptions& o) {
  const fs::path out(common.out);
  fs::create_directories(out);
  const std::uint64_t seed = common.seed >= 0 ? static_cast<std::uint64_t>(common.seed) : 1;
  fs::path corpus = o.corpus;
  if (o.toy_speakers > 0) {
    corpus = out / "corpus";
    tdsep::generate_toy_corpus(corpus, o.toy_speakers, o.toy_utts, o.toy_seconds, seed);
  }
  if (corpus.empty()) throw tdsep::ConfigError("synth: pass --corpus <dir> or --toy-speakers <n>");
  tdsep::ManifestOptions mo;
  mo.snr_range = {o.snr_lo, o.snr_hi};
  mo.valid_fraction = o.valid_frac;
  mo.test_fraction = o.test_frac;
  const tdsep::Manifest manifest = tdsep::build_manifest(corpus, o.pairs, seed, mo);
  tdsep::save_manifest(out / "manifest.jsonl", manifest);
  if (!o.no_audio) {
    for (const char* sub : {"mix", "s1", "s2"}) fs::create_directories(out / sub);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      const auto& e = manifest.entries[i];
      const auto id = tdsep::utterance_id(e, i) + ".wav";
      const auto m = tdsep::load_mixture(e);
      tdsep::write_wav(out / "mix" / id, m.mixture);
      tdsep::write_wav(out / "s1" / id, m.sources[0]);
      tdsep::write_wav(out / "s2" / id, m.sources[1]);
    }
  }
  std::printf("wrote %zu entries to %s\n", manifest.entries.size(), (out / "manifest.jsonl").c_str());
  return 0;
}

int run_train(const CommonOptions& common, const std::string& manifest_path, long long max_steps) {
  tdsep::RunConfig cfg = resolve_config(common);
  if (max_steps > 0) cfg.max_steps = static_cast<std::size_t>(max_steps);
  const auto manifest = tdsep::load_manifest(manifest_path);
  const auto result = tdsep::train(cfg, manifest, common.out, [](std::size_t step, double loss) {
    if (step % 10 == 0) std::printf("step %zu loss %.4f\n", step, loss);
  });
  std::printf("trained %zu steps, final loss %.4f, %zu checkpoint(s) in %s\n", result.loss_log.size(),
              result.loss_log.back(), result.checkpoints.size(), common.out.c_str());
  return 0;
}

int run_evaluate(const CommonOptions& common, const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& split_name, bool oracle, bool identity) {
  const auto manifest = tdsep::load_manifest(manifest_path);
  const tdsep::Split split = tdsep::parse_split(split_name);
  tdsep::SdrReport report;
  if (oracle) {
    report = tdsep::evaluate_oracle(manifest, split);
  } else if (identity) {
    report = tdsep::evaluate_identity(manifest, split);
  } else {
    if (checkpoint.empty()) throw tdsep::ConfigError("evaluate: --checkpoint is required (or --oracle/--identity)");
    report = tdsep::evaluate(tdsep::load_checkpoint(checkpoint), manifest, split);
  }
  tdsep::write_report(common.out, report);
  std::printf("%s: %zu utterances, mean SDR %.2f dB, mean SDRi %.2f dB (mixture %.2f dB)\n", report.tag.c_str(),
              report.per_utterance.size(), report.mean_sdr, report.mean_sdri, report.mixture_baseline_sdr);
  std::printf("published WSJ0-2mix SDRi for comparison: pyramid %.1f, IRM %.1f, Conv-TasNet* %.1f dB\n",
              tdsep::reference_results::kPyramidSdriDb, tdsep::reference_results::kIdealRatioMaskSdriDb,
              tdsep::reference_results::kConvTasNetReimplSdriDb);
  return 0;
}

int run_rf(const CommonOptions& common) {
  const tdsep::RunConfig cfg = resolve_config(common);
  const auto& sep = cfg.separator;
  const auto& fe = cfg.frontend;
  const auto samples = [&](tdsep::Index frames) { return (frames - 1) * fe.stride + fe.win_len; };
  const auto repeat = [&](tdsep::Index times) {
    std::vector<tdsep::Index> d;
    for (tdsep::Index i = 0; i < times; ++i) d.insert(d.end(), sep.dilations.begin(), sep.dilations.end());
    return d;
  };
  std::printf("variant %s, kernel %lld, dilations [", tdsep::to_string(sep.variant).c_str(),
              static_cast<long long>(sep.kernel));
  for (std::size_t i = 0; i < sep.dilations.size(); ++i)
    std::printf("%s%lld", i ? ", " : "", static_cast<long long>(sep.dilations[i]));
  std::printf("]\n");
  std::printf("%-16s %10s %10s\n", "stage", "frames", "samples");
  for (std::size_t i = 0; i < sep.dilations.size(); ++i) {
    const tdsep::Index rf = tdsep::receptive_field({sep.dilations[i]}, sep.kernel);
    std::printf("block %-10zu %10lld %10lld\n", i, static_cast<long long>(rf), static_cast<long long>(samples(rf)));
  }
  const tdsep::Index per_tcn = tdsep::receptive_field(sep.dilations, sep.kernel);
  std::printf("%-16s %10lld %10lld\n", "tcn", static_cast<long long>(per_tcn), static_cast<long long>(samples(per_tcn)));
  if (sep.variant == tdsep::Variant::kPy) {
    for (std::size_t b = 0; b < sep.py_branch_depths.size(); ++b) {
      const tdsep::Index rf = tdsep::receptive_field(repeat(sep.py_branch_depths[b]), sep.kernel);
      std::printf("branch %-9zu %10lld %10lld\n", b, static_cast<long long>(rf), static_cast<long long>(samples(rf)));
    }
  } else {
    const tdsep::Index total = tdsep::receptive_field(repeat(sep.num_tcns), sep.kernel);
    std::printf("%-16s %10lld %10lld\n", ("stack x" + std::to_string(sep.num_tcns)).c_str(),
                static_cast<long long>(total), static_cast<long long>(samples(total)));
  }
  return 0;
}

int run_params(const CommonOptions& common) {
  const tdsep::RunConfig cfg = resolve_config(common);
  std::vector<tdsep::Variant> variants = tdsep::all_variants();
  if (!common.variant.empty()) variants = {cfg.separator.variant};
  std::printf("%-8s %12s\n", "variant", "parameters");
  for (auto v : variants) {
    tdsep::SeparatorConfig sep = cfg.separator;
    sep.variant = v;
    try {
      std::printf("%-8s %12zu\n", tdsep::to_string(v).c_str(), tdsep::count_parameters(sep, cfg.frontend.num_basis));
    } catch (const tdsep::ConfigError& e) {
      std::printf("%-8s %12s  (%s)\n", tdsep::to_string(v).c_str(), "n/a", e.what());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tdsep: time-domain monaural speech separation"};
  app.require_subcommand(1);

  CommonOptions common;
  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "build a mixture manifest (and mixtures) from a corpus");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--corpus", synth.corpus, "corpus root with one directory of WAVs per speaker");
  synth_cmd->add_option("--toy-speakers", synth.toy_speakers, "generate a synthetic corpus with this many speakers");
  synth_cmd->add_option("--toy-utts", synth.toy_utts, "utterances per synthetic speaker");
  synth_cmd->add_option("--toy-seconds", synth.toy_seconds, "duration of synthetic utterances");
  synth_cmd->add_option("--pairs", synth.pairs, "number of mixtures");
  synth_cmd->add_option("--snr-lo", synth.snr_lo, "lowest mixing SNR (dB)");
  synth_cmd->add_option("--snr-hi", synth.snr_hi, "highest mixing SNR (dB)");
  synth_cmd->add_option("--valid-frac", synth.valid_frac, "fraction of pairs in the valid split");
  synth_cmd->add_option("--test-frac", synth.test_frac, "fraction of pairs in the test split");
  synth_cmd->add_flag("--no-audio", synth.no_audio, "write only the manifest");

  std::string manifest_path;
  long long max_steps = -1;
  auto* train_cmd = app.add_subcommand("train", "train a separator on the manifest's train split");
  add_common(train_cmd, common);
  train_cmd->add_option("--manifest", manifest_path, "manifest (JSON lines)")->required();
  train_cmd->add_option("--max-steps", max_steps, "override train.max_steps");

  std::string checkpoint;
  std::string split = "test";
  bool oracle = false;
  bool identity = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint (or the IRM oracle) on a split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  eval_cmd->add_option("--manifest", manifest_path, "manifest (JSON lines)")->required();
  eval_cmd->add_option("--split", split, "train, valid or test");
  eval_cmd->add_flag("--oracle", oracle, "evaluate the ideal-ratio-mask oracle instead of a model");
  eval_cmd->add_flag("--identity", identity, "evaluate the mixture-as-estimate baseline");

  auto* rf_cmd = app.add_subcommand("rf", "print the receptive-field table for a config");
  add_common(rf_cmd, common);
  auto* params_cmd = app.add_subcommand("params", "print separator parameter counts per variant");
  add_common(params_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(common, synth);
    if (*train_cmd) return run_train(common, manifest_path, max_steps);
    if (*eval_cmd) return run_evaluate(common, checkpoint, manifest_path, split, oracle, identity);
    if (*rf_cmd) return run_rf(common);
    if (*params_cmd) return run_params(common);
  } catch (const tdsep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
