#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "delta/analysis.h"
#include "delta/decoder.h"
#include "delta/error.h"
#include "delta/harness/campaign.h"
#include "delta/harness/memory.h"
#include "delta/harness/scorer_factory.h"
#include "delta/harness/trajectory_io.h"
#include "delta/metrics.h"
#include "delta/ngram.h"
#include "delta/remote/stub_server.h"
#include "delta/vocabulary.h"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace delta;

namespace {

void emit(const ojson& j, const std::string& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text << std::flush;
    return;
  }
  harness::write_file_atomic(out, text);
}

TokenizerMode parse_tokenizer(const std::string& s) { return tokenizer_mode_from_string(s); }

// vocab.txt in dir or one of its ancestors.
std::optional<fs::path> find_run_vocab(fs::path dir) {
  dir = fs::absolute(dir);
  for (;;) {
    if (fs::exists(dir / "vocab.txt")) return dir / "vocab.txt";
    if (!dir.has_parent_path() || dir.parent_path() == dir) return std::nullopt;
    dir = dir.parent_path();
  }
}

harness::VocabularyInfo resolve_vocab(const std::string& vocab_path, const std::string& tokenizer,
                                      const std::vector<std::string>& specs) {
  if (!vocab_path.empty()) return {Vocabulary::load(vocab_path), parse_tokenizer(tokenizer)};
  for (const auto& spec : specs) {
    if (spec.empty()) continue;
    if (auto info = harness::vocabulary_of(spec)) return *info;
  }
  throw Error(ErrorCode::kInvalidConfig, "no vocabulary: pass --vocab or an n-gram model");
}

ojson length_json(const LengthStats& s) {
  ojson j;
  j["count"] = s.count;
  j["mean"] = s.mean;
  j["stddev"] = s.stddev;
  j["min"] = s.min;
  j["max"] = s.max;
  return j;
}

ojson metric_json(const MetricResult& r) {
  ojson j;
  j["value"] = r.value;
  j["k"] = r.k;
  j["estimator"] = to_string(r.estimator);
  if (r.estimator == Estimator::kResampled) {
    j["repeats"] = r.repeats;
    j["stderr"] = r.stderr_value ? ojson(*r.stderr_value) : ojson(nullptr);
  }
  return j;
}

std::vector<EvalRecord> records_from(const fs::path& in) {
  if (fs::is_directory(in)) {
    if (fs::exists(in / "records.jsonl")) return load_eval_records(in / "records.jsonl");
    throw Error(ErrorCode::kIo, in.string() + " has no records.jsonl");
  }
  return load_eval_records(in);
}

// Trajectory groups keyed by arm: dir itself when it holds a trajectories/
// folder, otherwise each immediate subdirectory that does.
std::map<std::string, std::vector<Trajectory>> trajectory_groups(const fs::path& dir) {
  std::map<std::string, std::vector<Trajectory>> groups;
  if (fs::is_directory(dir / "trajectories")) {
    groups[dir.filename().string()] = harness::load_trajectories(dir);
    return groups;
  }
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, dir.string() + " is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "trajectories")) {
      groups[entry.path().filename().string()] = harness::load_trajectories(entry.path());
    }
  }
  if (groups.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories under " + dir.string());
  return groups;
}

std::vector<double> parse_grid(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(part, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != part.size()) throw Error(ErrorCode::kInvalidConfig, "not a number: " + part);
      out.push_back(v);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);

  CLI::App app{"deltactl: delta-logit transfer decoding, analysis and evaluation"};
  app.require_subcommand(1);
  std::string out;
  auto summary_out = [&out](CLI::App* sub) {
    sub->add_option("--out", out, "Write the JSON summary here instead of stdout");
  };

  // train-ngram
  auto* train = app.add_subcommand("train-ngram", "Train an add-k smoothed n-gram model");
  std::string train_corpus;
  std::string train_model;
  std::string train_vocab;
  std::vector<std::string> train_vocab_from;
  std::string train_tokenizer = "whitespace";
  int train_order = 2;
  double train_k = 1.0;
  train->add_option("corpus", train_corpus, "One document per line")->required()->check(CLI::ExistingFile);
  train->add_option("--order", train_order, "n-gram order")->required()->check(CLI::Range(1, 16));
  train->add_option("--out", train_model, "Output model file")->required();
  train->add_option("--smoothing", train_k, "Add-k smoothing constant");
  train->add_option("--tokenizer", train_tokenizer)->check(CLI::IsMember({"whitespace", "byte"}));
  train->add_option("--vocab", train_vocab, "Vocabulary file (default: words of the corpus)");
  train->add_option("--vocab-from", train_vocab_from,
                    "Extra corpora whose words join the vocabulary");

  // build-vocab
  auto* build_vocab = app.add_subcommand("build-vocab", "Write the word vocabulary of corpora");
  summary_out(build_vocab);
  std::vector<std::string> vocab_corpora;
  std::string vocab_file;
  build_vocab->add_option("corpora", vocab_corpora)->required()->check(CLI::ExistingFile);
  build_vocab->add_option("--vocab-out", vocab_file)->required();

  // decode
  auto* dec = app.add_subcommand("decode", "Decode one prompt");
  summary_out(dec);
  std::string dec_base, dec_expert, dec_expert_base, dec_prompt_file, dec_vocab;
  std::string dec_tokenizer = "whitespace";
  DecodeConfig dec_config;
  bool dec_greedy = false;
  bool dec_kl = false;
  int dec_timeout = 30000;
  dec->add_option("--base", dec_base, "Base scorer spec")->required();
  dec->add_option("--expert", dec_expert, "Expert scorer spec");
  dec->add_option("--expert-base", dec_expert_base, "Expert's base scorer spec");
  dec->add_option("--lambda", dec_config.lambda);
  dec->add_option("--temp", dec_config.temperature);
  dec->add_option("--top-p", dec_config.top_p);
  dec->add_option("--max-tokens", dec_config.max_tokens);
  dec->add_option("--seed", dec_config.seed);
  dec->add_option("--prompt-file", dec_prompt_file)->required()->check(CLI::ExistingFile);
  dec->add_option("--vocab", dec_vocab);
  dec->add_option("--tokenizer", dec_tokenizer)->check(CLI::IsMember({"whitespace", "byte"}));
  dec->add_option("--timeout-ms", dec_timeout);
  dec->add_flag("--greedy", dec_greedy);
  dec->add_flag("--kl", dec_kl, "Record per-step KL(base || combined)");

  // run
  auto* run = app.add_subcommand("run", "Run or resume a campaign");
  summary_out(run);
  std::string run_manifest;
  std::string run_dir = "runs";
  harness::CampaignOptions run_options;
  std::size_t run_max_items = 0;
  run->add_option("--manifest", run_manifest)->required()->check(CLI::ExistingFile);
  run->add_option("--run-dir", run_dir, "Output root");
  run->add_option("--workers", run_options.workers)->check(CLI::PositiveNumber);
  run->add_option("--max-items", run_max_items, "Stop after this many new samples");
  run->add_option("--timeout-ms", run_options.scorer_timeout_ms);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Grid over lambda and temperature");
  summary_out(sw);
  std::string sw_manifest;
  std::string sw_dir = "runs";
  std::string sw_arm;
  std::vector<std::string> sw_lambdas, sw_temps;
  harness::CampaignOptions sw_options;
  sw->add_option("--manifest", sw_manifest)->required()->check(CLI::ExistingFile);
  sw->add_option("--run-dir", sw_dir);
  sw->add_option("--lambdas", sw_lambdas)->required();
  sw->add_option("--temps", sw_temps)->required();
  sw->add_option("--arm", sw_arm);
  sw->add_option("--workers", sw_options.workers)->check(CLI::PositiveNumber);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Trajectory analyses");
  analyze->require_subcommand(1);
  std::string an_in;
  auto* an_pcr = analyze->add_subcommand("pcr", "Path coverage rate of a probe");
  summary_out(an_pcr);
  std::string pcr_probe;
  an_pcr->add_option("--in", an_in)->required();
  an_pcr->add_option("--probe", pcr_probe, "Probe scorer spec")->required();
  auto* an_cos = analyze->add_subcommand("cosine", "Cosine between two delta series");
  summary_out(an_cos);
  std::string cos_expert, cos_expert_base, cos_other, cos_other_base;
  an_cos->add_option("--in", an_in)->required();
  an_cos->add_option("--expert", cos_expert)->required();
  an_cos->add_option("--expert-base", cos_expert_base)->required();
  an_cos->add_option("--other-expert", cos_other)->required();
  an_cos->add_option("--other-expert-base", cos_other_base)->required();
  auto* an_tokens = analyze->add_subcommand("tokens", "Behaviour token frequencies");
  summary_out(an_tokens);
  std::string tokens_spec, tokens_vocab;
  an_tokens->add_option("--in", an_in)->required();
  an_tokens->add_option("--token-set", tokens_spec)->required()->check(CLI::ExistingFile);
  an_tokens->add_option("--vocab", tokens_vocab, "Default: the run's vocab.txt");
  auto* an_length = analyze->add_subcommand("length", "Response length statistics");
  summary_out(an_length);
  an_length->add_option("--in", an_in)->required();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Evaluation metrics");
  metrics->require_subcommand(1);
  std::string m_in;
  int m_k = 1;
  bool m_exact = false;
  int m_repeats = 0;
  std::uint64_t m_seed = 0;
  auto* m_pass = metrics->add_subcommand("pass-at-k", "pass@k");
  summary_out(m_pass);
  m_pass->add_option("--in", m_in, "records.jsonl or an arm directory")->required();
  m_pass->add_option("-k", m_k)->required();
  auto* exact_flag = m_pass->add_flag("--exact", m_exact);
  m_pass->add_option("--repeats", m_repeats)->excludes(exact_flag)->check(CLI::PositiveNumber);
  m_pass->add_option("--seed", m_seed);
  auto* m_major = metrics->add_subcommand("majority", "majority@k");
  summary_out(m_major);
  m_major->add_option("--in", m_in)->required();
  m_major->add_option("-k", m_k)->required();
  m_major->add_option("--repeats", m_repeats)->check(CLI::PositiveNumber);
  m_major->add_option("--seed", m_seed);
  auto* m_recovery = metrics->add_subcommand("recovery", "Recovery rate");
  summary_out(m_recovery);
  double rec_method = 0, rec_base = 0, rec_rl = 0;
  m_recovery->add_option("--method", rec_method)->required();
  m_recovery->add_option("--base", rec_base)->required();
  m_recovery->add_option("--rl", rec_rl)->required();

  // serve-stub
  auto* serve = app.add_subcommand("serve-stub", "Serve a local scorer over the wire protocol");
  summary_out(serve);
  std::string serve_model;
  int serve_port = 0;
  bool serve_stdio = false;
  std::string serve_bind = "127.0.0.1";
  remote::StubOptions serve_options;
  serve->add_option("--model", serve_model)->required();
  serve->add_option("--port", serve_port)->check(CLI::Range(0, 65535));
  serve->add_option("--bind", serve_bind);
  serve->add_flag("--stdio", serve_stdio, "Serve on stdin/stdout");
  serve->add_flag("--sparse", serve_options.allow_sparse, "Use the topk/rest form when exact");

  // mem-estimate
  auto* mem = app.add_subcommand("mem-estimate", "Training memory budget");
  summary_out(mem);
  harness::MemoryPlan plan;
  mem->add_option("--params", plan.n_params)->required();
  mem->add_option("--tp", plan.tp_degree)->check(CLI::PositiveNumber);
  mem->add_option("--instances", plan.n_model_instances)->check(CLI::PositiveNumber);
  mem->add_option("--bytes-per-param", plan.bytes_per_param);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) {
      const auto mode = parse_tokenizer(train_tokenizer);
      std::optional<Vocabulary> vocab;
      if (!train_vocab.empty()) {
        vocab = Vocabulary::load(train_vocab);
      } else if (mode == TokenizerMode::kByte) {
        vocab = Vocabulary::bytes();
      } else {
        auto docs = read_lines(train_corpus);
        for (const auto& extra : train_vocab_from) {
          auto more = read_lines(extra);
          docs.insert(docs.end(), more.begin(), more.end());
        }
        vocab = Vocabulary::from_words(docs);
      }
      const auto corpus = load_corpus(train_corpus, *vocab, mode);
      const auto model = train_ngram(corpus, train_order, train_k, *vocab, mode);
      model.save(train_model);
      ojson j;
      j["model"] = train_model;
      j["order"] = train_order;
      j["smoothing_k"] = train_k;
      j["tokenizer"] = to_string(mode);
      j["vocab_size"] = vocab->size();
      j["documents"] = corpus.size();
      emit(j, out);
    } else if (build_vocab->parsed()) {
      std::vector<std::string> docs;
      for (const auto& c : vocab_corpora) {
        auto lines = read_lines(c);
        docs.insert(docs.end(), lines.begin(), lines.end());
      }
      const auto vocab = Vocabulary::from_words(docs);
      vocab.save(vocab_file);
      ojson j;
      j["vocab"] = vocab_file;
      j["size"] = vocab.size();
      emit(j, out);
    } else if (dec->parsed()) {
      if (dec_expert.empty() != dec_expert_base.empty()) {
        throw Error(ErrorCode::kInvalidConfig, "--expert and --expert-base go together");
      }
      if (dec_greedy) dec_config.mode = DecodeMode::kGreedy;
      const auto info = resolve_vocab(dec_vocab, dec_tokenizer, {dec_base, dec_expert, dec_expert_base});
      auto base = harness::open_scorer(dec_base, {}, dec_timeout);
      std::unique_ptr<Scorer> expert, expert_base;
      if (!dec_expert.empty()) {
        expert = harness::open_scorer(dec_expert, {}, dec_timeout);
        expert_base = harness::open_scorer(dec_expert_base, {}, dec_timeout);
      }
      std::ifstream pf(dec_prompt_file);
      std::stringstream ps;
      ps << pf.rdbuf();
      std::string prompt_text = ps.str();
      while (!prompt_text.empty() && (prompt_text.back() == '\n' || prompt_text.back() == '\r')) {
        prompt_text.pop_back();
      }
      const auto prompt = tokenize(info.vocab, prompt_text, info.tokenizer);
      DecodeOptions opts;
      opts.eos = info.vocab.eos();
      opts.record_kl = dec_kl;
      const auto traj = decode({base.get(), expert.get(), expert_base.get()}, prompt, dec_config, opts);
      harness::TrajectoryLine line;
      line.problem_id = dec_prompt_file;
      line.trajectory = traj;
      auto j = ojson::parse(harness::encode_trajectory_line(line));
      j.erase("extracted_answer");
      j["text"] = detokenize(info.vocab, traj.tokens(), info.tokenizer);
      emit(j, out);
    } else if (run->parsed()) {
      const auto manifest = harness::RunManifest::load(run_manifest);
      if (run_max_items > 0) run_options.max_new_items = run_max_items;
      const auto report = harness::run_campaign(manifest, run_dir, run_options);
      ojson j;
      j["run_dir"] = report.run_dir.string();
      j["complete"] = report.complete;
      auto arms = ojson::array();
      for (const auto& a : report.arms) {
        ojson aj;
        aj["label"] = a.label;
        aj["expected"] = a.expected;
        aj["completed"] = a.completed;
        aj["skipped"] = a.skipped;
        aj["mean_accuracy"] = a.mean_accuracy;
        aj["accuracy_stddev"] = a.accuracy_stddev;
        aj["degraded"] = a.degraded;
        aj["errors"] = a.errors;
        aj["wall_clock_seconds"] = a.wall_clock_seconds;
        arms.push_back(std::move(aj));
      }
      j["arms"] = std::move(arms);
      emit(j, out);
      bool failed = false;
      for (const auto& a : report.arms) failed |= a.degraded;
      if (failed) return 2;
    } else if (sw->parsed()) {
      const auto manifest = harness::RunManifest::load(sw_manifest);
      const auto rows = harness::sweep(manifest, parse_grid(sw_lambdas), parse_grid(sw_temps), sw_dir,
                                       sw_arm.empty() ? std::nullopt : std::optional(sw_arm),
                                       sw_options);
      auto table = ojson::array();
      bool failed = false;
      for (const auto& r : rows) {
        ojson rj;
        rj["lambda"] = r.lambda;
        rj["temperature"] = r.temperature;
        rj["mean_accuracy"] = r.mean_accuracy;
        rj["stddev"] = r.stddev;
        rj["degraded"] = r.degraded;
        rj["error"] = r.error ? ojson(*r.error) : ojson(nullptr);
        failed |= r.degraded;
        table.push_back(std::move(rj));
      }
      ojson j;
      j["rows"] = std::move(table);
      emit(j, out);
      if (failed) return 2;
    } else if (an_pcr->parsed()) {
      const auto trajectories = harness::load_trajectories(an_in);
      const auto probe = harness::open_scorer(pcr_probe);
      const auto report = delta::pcr(trajectories, *probe);
      ojson j;
      j["probe"] = probe->label();
      j["n_trajectories"] = report.n_trajectories;
      j["mean"] = report.mean;
      j["per_trajectory"] = report.per_trajectory;
      emit(j, out);
    } else if (an_cos->parsed()) {
      const auto trajectories = harness::load_trajectories(an_in);
      const auto e1 = harness::open_scorer(cos_expert);
      const auto b1 = harness::open_scorer(cos_expert_base);
      const auto e2 = harness::open_scorer(cos_other);
      const auto b2 = harness::open_scorer(cos_other_base);
      std::vector<double> per;
      double sum = 0.0;
      for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const auto a = delta_series_along(trajectories[t], *e1, *b1);
        const auto b = delta_series_along(trajectories[t], *e2, *b2);
        try {
          per.push_back(avg_cosine_sim(a, b));
        } catch (const Error& e) {
          throw Error(e.code(), "trajectory " + std::to_string(t) + ": " + e.what());
        }
        sum += per.back();
      }
      if (per.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories");
      ojson j;
      j["n_trajectories"] = per.size();
      j["mean"] = sum / static_cast<double>(per.size());
      j["per_trajectory"] = per;
      emit(j, out);
    } else if (an_tokens->parsed()) {
      fs::path vocab_path = tokens_vocab;
      if (vocab_path.empty()) {
        auto found = find_run_vocab(an_in);
        if (!found) throw Error(ErrorCode::kInvalidConfig, "no vocab.txt found; pass --vocab");
        vocab_path = *found;
      }
      const auto vocab = Vocabulary::load(vocab_path);
      const auto spec = TokenSetSpec::load(tokens_spec);
      ojson j;
      for (const auto& [group, trajectories] : trajectory_groups(an_in)) {
        ojson g;
        for (const auto& [cat, freq] : token_frequency(trajectories, spec, vocab)) g[cat] = freq;
        j[group] = std::move(g);
      }
      emit(j, out);
    } else if (an_length->parsed()) {
      ojson j;
      for (const auto& [group, stats] : length_stats(trajectory_groups(an_in))) {
        j[group] = length_json(stats);
      }
      emit(j, out);
    } else if (m_pass->parsed()) {
      const auto records = records_from(m_in);
      emit(metric_json(m_repeats > 0 ? pass_at_k_resampled(records, m_k, m_repeats, m_seed)
                                     : pass_at_k_exact(records, m_k)),
           out);
    } else if (m_major->parsed()) {
      const auto records = records_from(m_in);
      emit(metric_json(majority_at_k(records, m_k, m_repeats > 0 ? m_repeats : 1000, m_seed)), out);
    } else if (m_recovery->parsed()) {
      ojson j;
      j["recovery_rate"] = recovery_rate(rec_method, rec_base, rec_rl);
      j["percent"] = 100.0 * j["recovery_rate"].get<double>();
      emit(j, out);
    } else if (serve->parsed()) {
      const auto model = harness::open_scorer(serve_model);
      if (serve_stdio) {
        remote::serve_stdio(*model, serve_options);
      } else {
        remote::TcpStubServer server(*model, static_cast<std::uint16_t>(serve_port), serve_options,
                                     serve_bind);
        ojson j;
        j["listening"] = serve_bind + ":" + std::to_string(server.port());
        j["vocab_size"] = model->vocab_size();
        emit(j, out);
        server.wait();
      }
    } else if (mem->parsed()) {
      const auto e = harness::estimate_memory(plan);
      ojson j;
      j["model_gb_per_gpu"] = e.model_gb_per_gpu;
      j["optimizer_gb_cpu"] = e.optimizer_gb_cpu;
      j["activation_gb_range"] = {e.activation_gb_range.first, e.activation_gb_range.second};
      j["buffer_gb_range"] = {e.buffer_gb_range.first, e.buffer_gb_range.second};
      j["total_gpu_gb_range"] = {e.total_gpu_range.first, e.total_gpu_range.second};
      emit(j, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "deltactl: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
