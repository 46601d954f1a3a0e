#include "mash/pipeline/stages.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <memory>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mash/corpus/pairs.hpp"
#include "mash/corpus/style.hpp"
#include "mash/corpus/text.hpp"
#include "mash/detectors/external.hpp"
#include "mash/detectors/ppl_ratio.hpp"
#include "mash/detectors/supervised.hpp"
#include "mash/dpo/dpo.hpp"
#include "mash/eval/defense.hpp"
#include "mash/eval/metrics.hpp"
#include "mash/pipeline/manifest.hpp"
#include "mash/refine/refine.hpp"
#include "mash/rng.hpp"
#include "mash/styler/decode.hpp"
#include "mash/styler/sft.hpp"

namespace mash::pipeline {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Run {
  const StageOptions& opt;
  std::string stage;

  [[nodiscard]] const Config& cfg() const { return opt.config; }
  [[nodiscard]] fs::path path(const char* name) const { return opt.out_dir / name; }
  [[nodiscard]] std::uint64_t seed(const std::string& stream) const { return stage_seed(opt.seed, stream); }

  /// Existence check for an upstream artifact.
  [[nodiscard]] fs::path input(const char* name, const std::string& producer) const {
    auto p = path(name);
    if (!fs::exists(p)) {
      throw StageOrderError(stage + " needs " + p.string() + "; run '" + producer + "' first");
    }
    return p;
  }

  void manifest(const fs::path& artifact, const std::vector<fs::path>& inputs,
                const nlohmann::json& extra = nlohmann::json::object()) const {
    write_manifest(artifact, stage, opt.seed, cfg().dump(), inputs, extra);
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << text;
  if (text.empty() || text.back() != '\n') {
    out << '\n';
  }
}

std::vector<TokenSeq> tokens_of(const std::vector<corpus::Document>& docs, Label label) {
  std::vector<TokenSeq> out;
  for (const auto& d : docs) {
    if (d.label == label) {
      out.push_back(d.tokens);
    }
  }
  return out;
}

// ---- shared loaders ----

double tau_of(const Run& r) {
  const auto tau = r.cfg().get<double>("detector.tau", 0.5);
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("detector.tau must be in (0, 1)");
  }
  return tau;
}

std::shared_ptr<const detectors::Detector> target_detector(const Run& r) {
  const auto backend = r.cfg().get<std::string>("detector.backend", "supervised");
  if (backend == "external") {
    const auto endpoint = r.cfg().require<std::string>("detector.endpoint");
    const auto timeout = detectors::Millis(r.cfg().get<long>("detector.timeout_ms", 10000));
    return std::make_shared<detectors::ExternalDetector>(detectors::open_channel(endpoint, timeout));
  }
  if (backend != "supervised" && backend != "ppl-ratio") {
    throw ConfigError("detector.backend must be supervised, ppl-ratio or external");
  }
  return detectors::load_detector(r.input(artifacts::kDetector, "train-detector"));
}

/// Inputs that identify the detector for manifests (external ones have no file).
std::vector<fs::path> detector_inputs(const Run& r) {
  if (r.cfg().get<std::string>("detector.backend", "supervised") == "external") {
    return {};
  }
  return {r.path(artifacts::kDetector)};
}

lm::TextLM eval_lm(const Run& r) {
  const auto docs = corpus::read_documents(r.input(artifacts::kLmDocs, "gen-corpus"));
  std::vector<TokenSeq> seqs;
  for (const auto& d : docs) {
    seqs.push_back(d.tokens);
  }
  return lm::TextLM::fit(seqs, r.cfg().get<int>("eval_lm.order", 3), r.cfg().get<double>("eval_lm.alpha", 0.1));
}

eval::ConstraintConfig constraints(const Run& r) {
  eval::ConstraintConfig c;
  c.epsilon = r.cfg().get<double>("constraints.epsilon", c.epsilon);
  c.delta = r.cfg().get<double>("constraints.delta", c.delta);
  c.validate();
  return c;
}

/// "dpo" or "sft" model artifact used by attack and the model polisher.
fs::path model_artifact(const Run& r, const std::string& key) {
  const auto which = r.cfg().get<std::string>(key, "dpo");
  if (which == "dpo") {
    return r.input(artifacts::kDpo, "train-dpo");
  }
  if (which == "sft") {
    return r.input(artifacts::kSft, "train-sft");
  }
  throw ConfigError(key + " must be dpo or sft");
}

struct AttackRecord {
  std::string id;
  std::string ai_text;
  std::string adv_text;
};

void write_attack_records(const fs::path& path, const std::vector<AttackRecord>& recs) {
  std::string out;
  for (const auto& a : recs) {
    ordered_json j;
    j["id"] = a.id;
    j["ai_text"] = a.ai_text;
    j["adv_text"] = a.adv_text;
    out += j.dump() + "\n";
  }
  write_text(path, out);
}

std::vector<AttackRecord> read_attack_records(const fs::path& path) {
  std::vector<AttackRecord> out;
  for (const auto& line : corpus::read_lines(path)) {
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("ai_text").get<std::string>(),
                     j.at("adv_text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw StructuralError(path.string() + ": bad attack record: " + e.what());
    }
  }
  return out;
}

// ---- stages ----

void gen_corpus(const Run& r) {
  const auto& c = r.cfg();
  const auto n_det = c.require<std::size_t>("corpus.n_detector");
  const auto n_pool = c.require<std::size_t>("corpus.n_pairs");
  const auto n_held = c.require<std::size_t>("corpus.n_heldout");
  const auto n_lm = c.get<std::size_t>("corpus.n_lm", 500);
  const auto table = c.has("corpus.synonyms") ? corpus::SynonymTable::load(c.require<std::string>("corpus.synonyms"))
                                              : corpus::SynonymTable::load_default();
  std::vector<corpus::Document> humans;
  std::vector<fs::path> inputs;
  const auto total = n_det + n_pool + n_held + n_lm;
  if (c.has("corpus.human_jsonl")) {
    const fs::path src = c.require<std::string>("corpus.human_jsonl");
    humans = corpus::read_documents(src);
    inputs.push_back(src);
    if (humans.size() < total) {
      throw ConfigError("corpus.human_jsonl has " + std::to_string(humans.size()) + " documents, the splits need " +
                        std::to_string(total));
    }
  } else {
    corpus::SynthConfig sc;
    sc.sentences_per_doc = c.get<std::size_t>("corpus.sentences_per_doc", sc.sentences_per_doc);
    sc.zipf_exponent = c.get<double>("corpus.zipf_exponent", sc.zipf_exponent);
    humans = corpus::synthesize_human_corpus(total, r.seed("corpus"), table, sc);
  }
  corpus::MachineStyleConfig ms;
  ms.p_connector = c.get<double>("style.p_connector", ms.p_connector);
  ms.p_synonym = c.get<double>("style.p_synonym", ms.p_synonym);
  const auto style_seed = r.seed("machine_style");

  auto emit = [&](const char* name, std::size_t begin, std::size_t n, bool with_machine) {
    std::vector<corpus::Document> docs;
    for (std::size_t i = begin; i < begin + n; ++i) {
      docs.push_back(humans[i]);
      if (with_machine) {
        docs.push_back(corpus::machine_style(humans[i], style_seed, table, ms));
      }
    }
    corpus::write_documents(r.path(name), docs);
    r.manifest(r.path(name), inputs, {{"documents", docs.size()}});
  };
  emit(artifacts::kDetectorDocs, 0, n_det, true);
  emit(artifacts::kPool, n_det, n_pool, false);
  emit(artifacts::kHeldout, n_det + n_pool, n_held, true);
  emit(artifacts::kLmDocs, n_det + n_pool + n_held, n_lm, true);
  spdlog::info("gen-corpus: {} detector, {} pool, {} held-out, {} lm documents", n_det, n_pool, n_held, n_lm);
}

void train_detector(const Run& r) {
  const auto& c = r.cfg();
  const auto backend = c.require<std::string>("detector.backend");
  const auto docs_path = r.input(artifacts::kDetectorDocs, "gen-corpus");
  const auto docs = corpus::read_documents(docs_path);
  std::shared_ptr<detectors::Detector> det;
  ordered_json extra;
  if (backend == "supervised") {
    detectors::SupervisedConfig sc;
    sc.dim = c.get<std::size_t>("detector.dim", sc.dim);
    sc.lr = c.get<double>("detector.lr", sc.lr);
    sc.l2 = c.get<double>("detector.l2", sc.l2);
    sc.max_epochs = c.get<std::size_t>("detector.max_epochs", sc.max_epochs);
    sc.seed = r.seed("detector.hash");
    std::vector<detectors::LabeledSeq> train;
    for (const auto& d : docs) {
      train.push_back({d.tokens, d.label});
    }
    detectors::FitReport fr;
    det = std::make_shared<detectors::SupervisedDetector>(detectors::fit_supervised(train, sc, &fr));
    extra["epochs"] = fr.epochs;
    extra["final_loss"] = fr.final_loss;
  } else if (backend == "ppl-ratio") {
    detectors::PplRatioConfig pc;
    pc.order = c.get<int>("detector.order", pc.order);
    pc.alpha = c.get<double>("detector.alpha", pc.alpha);
    std::vector<TokenSeq> all;
    for (const auto& d : docs) {
      all.push_back(d.tokens);
    }
    const auto vocab = corpus::Vocabulary::build(all);
    det = std::make_shared<detectors::PplRatioDetector>(
        detectors::fit_ppl_ratio(tokens_of(docs, Label::Human), tokens_of(docs, Label::AI), vocab, pc));
  } else if (backend == "external") {
    throw ConfigError("detector.backend external is queried, not trained");
  } else {
    throw ConfigError("detector.backend must be supervised or ppl-ratio");
  }
  std::vector<fs::path> inputs{docs_path};
  const auto held_path = r.path(artifacts::kHeldout);
  if (fs::exists(held_path)) {
    const auto held = corpus::read_documents(held_path);
    std::vector<double> hs;
    std::vector<double> ms;
    for (const auto& d : held) {
      (d.label == Label::AI ? ms : hs).push_back(det->evaluate(d.tokens));
    }
    if (!hs.empty() && !ms.empty()) {
      const auto roc = eval::roc(hs, ms);
      std::vector<detectors::LabeledSeq> test;
      for (const auto& d : held) {
        test.push_back({d.tokens, d.label});
      }
      extra["heldout_accuracy"] = detectors::accuracy(*det, test, tau_of(r));
      extra["heldout_auroc"] = roc.auroc;
      extra["heldout_tpr_at_1pct_fpr"] = roc.tpr_at_1pct_fpr;
    }
    inputs.push_back(held_path);
  }
  nn::save_checkpoint(r.path(artifacts::kDetector), det->to_checkpoint());
  r.manifest(r.path(artifacts::kDetector), inputs, extra);
  spdlog::info("train-detector: {} backend, {}", backend, extra.dump());
}

void build_pairs_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto pool_path = r.input(artifacts::kPool, "gen-corpus");
  const auto pool = corpus::read_documents(pool_path);
  const auto filter = c.get<std::string>("pairs.filter", "target");
  std::shared_ptr<const detectors::Detector> det;
  std::vector<fs::path> inputs{pool_path};
  if (filter == "target") {
    det = target_detector(r);
    const auto di = detector_inputs(r);
    inputs.insert(inputs.end(), di.begin(), di.end());
  } else {
    det = detectors::load_detector(filter);
    inputs.emplace_back(filter);
  }
  detectors::DetectorOracle oracle(det, tau_of(r));
  const auto table = corpus::SynonymTable::load_default();
  corpus::MachineStyleConfig ms;
  ms.p_connector = c.get<double>("style.p_connector", ms.p_connector);
  ms.p_synonym = c.get<double>("style.p_synonym", ms.p_synonym);
  const auto style_seed = r.seed("machine_style");
  const auto styler = [&](const corpus::Document& d) { return corpus::machine_style(d, style_seed, table, ms); };
  corpus::PairBuildReport rep;
  const auto pairs = corpus::build_pairs(pool, oracle, styler, c.get<std::size_t>("pairs.max_pairs", pool.size()), &rep);
  corpus::write_pairs(r.path(artifacts::kPairs), pairs);
  r.manifest(r.path(artifacts::kPairs), inputs,
             {{"attempts", rep.attempts}, {"accepted", rep.accepted}, {"acceptance_rate", rep.acceptance_rate()},
              {"filter_queries", rep.queries}});
  spdlog::info("build-pairs: kept {} of {} (acceptance {:.3f})", rep.accepted, rep.attempts, rep.acceptance_rate());
}

void train_sft_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto pairs_path = r.input(artifacts::kPairs, "build-pairs");
  const auto pairs = corpus::read_pairs(pairs_path);
  if (pairs.empty()) {
    throw ContractViolation("train-sft: pairs file is empty");
  }
  styler::ModelDims dims;
  dims.d = c.get<std::size_t>("sft.d", dims.d);
  dims.max_len = c.get<std::size_t>("sft.max_len", dims.max_len);
  std::vector<styler::SftExample> examples;
  std::vector<TokenSeq> texts;
  std::size_t dropped = 0;
  for (const auto& ex : styler::sft_examples(pairs)) {
    if (ex.x_ai.size() > dims.max_len || ex.x_human.size() > 2 * dims.max_len) {
      ++dropped;
      continue;
    }
    texts.push_back(ex.x_ai);
    texts.push_back(ex.x_human);
    examples.push_back(ex);
  }
  if (examples.empty()) {
    throw ConfigError("train-sft: every pair exceeds sft.max_len");
  }
  auto vocab = corpus::Vocabulary::build(texts, c.get<std::size_t>("sft.min_count", 1));
  dims.vocab_size = vocab.size();
  styler::StylerModel model(std::move(vocab), dims, r.seed("sft.init"));
  styler::SftConfig sc;
  sc.lambda = c.get<double>("sft.lambda", sc.lambda);
  sc.lr = c.get<double>("sft.lr", sc.lr);
  sc.epochs = c.get<std::size_t>("sft.epochs", sc.epochs);
  sc.patience = c.get<std::size_t>("sft.patience", sc.patience);
  sc.batch_size = c.get<std::size_t>("sft.batch_size", sc.batch_size);
  sc.val_fraction = c.get<double>("sft.val_fraction", sc.val_fraction);
  sc.clip_norm = c.get<double>("sft.clip_norm", sc.clip_norm);
  sc.seed = r.seed("sft.train");
  const auto rep = styler::train_sft(model, examples, sc);
  model.save(r.path(artifacts::kSft));
  ordered_json hist = nlohmann::json::array();
  for (const auto& e : rep.history) {
    hist.push_back({{"epoch", e.epoch}, {"train", e.train.combined}, {"val", e.val.combined},
                    {"val_recon", e.val.recon}, {"val_trans", e.val.trans}});
  }
  r.manifest(r.path(artifacts::kSft), {pairs_path},
             {{"examples", examples.size()}, {"dropped_too_long", dropped}, {"initial_val", rep.initial_val.combined},
              {"best_val", rep.best_val}, {"best_epoch", rep.best_epoch}, {"early_stopped", rep.early_stopped},
              {"history", hist}});
  spdlog::info("train-sft: best val {:.4f} at epoch {}", rep.best_val, rep.best_epoch);
}

void mine_prefs(const Run& r) {
  const auto& c = r.cfg();
  const auto sft_path = r.input(artifacts::kSft, "train-sft");
  const auto pairs_path = r.input(artifacts::kPairs, "build-pairs");
  const auto model = styler::StylerModel::load(sft_path);
  std::vector<corpus::ParallelPair> pairs;
  for (auto& p : corpus::read_pairs(pairs_path)) {
    if (p.x_ai.tokens.size() <= model.dims().max_len) {
      pairs.push_back(std::move(p));
    }
  }
  detectors::DetectorOracle oracle(target_detector(r), tau_of(r));
  dpo::MiningConfig mc;
  mc.samples_per_input = c.get<std::size_t>("mining.samples_per_input", mc.samples_per_input);
  mc.temperature = c.get<double>("mining.temperature", mc.temperature);
  mc.mode = dpo::negative_mode_from_string(c.get<std::string>("mining.mode", "hard"));
  mc.seed = r.seed("mining");
  dpo::MiningReport rep;
  const auto triples = dpo::mine_preferences(pairs, model, oracle, mc, &rep);
  dpo::write_triples(r.path(artifacts::kPrefs), triples);
  auto inputs = std::vector<fs::path>{sft_path, pairs_path};
  const auto di = detector_inputs(r);
  inputs.insert(inputs.end(), di.begin(), di.end());
  r.manifest(r.path(artifacts::kPrefs), inputs,
             {{"mode", std::string(dpo::to_string(mc.mode))}, {"inputs", rep.inputs}, {"retained", rep.retained},
              {"retention_rate", rep.retention_rate()}, {"detector_queries", rep.queries}});
  spdlog::info("mine-prefs: kept {} of {} with {} queries", rep.retained, rep.inputs, rep.queries);
}

void train_dpo_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto sft_path = r.input(artifacts::kSft, "train-sft");
  const auto prefs_path = r.input(artifacts::kPrefs, "mine-prefs");
  const auto sft = styler::StylerModel::load(sft_path);
  const auto triples = dpo::read_triples(prefs_path);
  dpo::DpoConfig dc;
  dc.beta = c.get<double>("dpo.beta", dc.beta);
  dc.lr = c.get<double>("dpo.lr", dc.lr);
  dc.epochs = c.get<std::size_t>("dpo.epochs", dc.epochs);
  dc.batch_size = c.get<std::size_t>("dpo.batch_size", dc.batch_size);
  dc.clip_norm = c.get<double>("dpo.clip_norm", dc.clip_norm);
  dc.seed = r.seed("dpo");
  dpo::DpoReport rep;
  const auto policy = dpo::train_dpo(sft, triples, dc, &rep);
  policy.save(r.path(artifacts::kDpo));
  ordered_json hist = nlohmann::json::array();
  for (const auto& e : rep.history) {
    hist.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"mean_weighting", e.mean_weighting},
                    {"mean_grad_norm", e.mean_grad_norm}});
  }
  r.manifest(r.path(artifacts::kDpo), {sft_path, prefs_path},
             {{"triples", triples.size()}, {"reference_unchanged", rep.reference_unchanged}, {"history", hist}});
}

void attack_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto model_path = model_artifact(r, "attack.model");
  const auto held_path = r.input(artifacts::kHeldout, "gen-corpus");
  const auto model = styler::StylerModel::load(model_path);
  const auto beam = c.get<std::size_t>("attack.beam", 4);
  const auto limit = c.get<std::size_t>("attack.n", SIZE_MAX);
  // The oracle is wired up only to audit that generation never consults it.
  std::unique_ptr<detectors::DetectorOracle> audit;
  if (c.get<std::string>("detector.backend", "supervised") != "external" && fs::exists(r.path(artifacts::kDetector))) {
    audit = std::make_unique<detectors::DetectorOracle>(target_detector(r), tau_of(r));
  }
  std::vector<AttackRecord> recs;
  std::size_t skipped = 0;
  std::size_t fallbacks = 0;
  for (const auto& d : corpus::read_documents(held_path)) {
    if (d.label != Label::AI || recs.size() >= limit) {
      continue;
    }
    if (d.tokens.empty() || d.tokens.size() > model.dims().max_len) {
      ++skipped;
      continue;
    }
    auto out = styler::generate(model, d.tokens, styler::Style::Human, beam);
    if (out.empty()) {
      out = d.tokens;
      ++fallbacks;
    }
    recs.push_back({d.id, d.text, corpus::detokenize(out)});
  }
  write_attack_records(r.path(artifacts::kAttack), recs);
  const std::uint64_t queries = audit ? audit->query_count() : 0;
  r.manifest(r.path(artifacts::kAttack), {model_path, held_path},
             {{"model", model_path.filename().string()}, {"n", recs.size()}, {"skipped_too_long", skipped},
              {"empty_output_fallbacks", fallbacks}, {"detector_queries", queries}});
  spdlog::info("attack: {} outputs, {} detector queries", recs.size(), queries);
}

void refine_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto attack_path = r.input(artifacts::kAttack, "attack");
  const auto recs = read_attack_records(attack_path);
  detectors::DetectorOracle oracle(target_detector(r), tau_of(r));
  const auto lm = eval_lm(r);
  std::vector<fs::path> inputs{attack_path, r.path(artifacts::kLmDocs)};
  const auto di = detector_inputs(r);
  inputs.insert(inputs.end(), di.begin(), di.end());
  std::unique_ptr<refine::Polisher> polisher;
  const auto kind = c.get<std::string>("refine.polisher", "model");
  if (kind == "model") {
    const auto mp = model_artifact(r, "refine.model");
    polisher = std::make_unique<refine::ModelSamplerPolisher>(
        std::make_shared<const styler::StylerModel>(styler::StylerModel::load(mp)),
        c.get<double>("refine.temperature", 0.7));
    inputs.push_back(mp);
  } else if (kind == "identity") {
    polisher = std::make_unique<refine::IdentityPolisher>();
  } else if (kind.starts_with("exec:") || kind.starts_with("tcp:")) {
    polisher = std::make_unique<refine::ExternalPolisher>(
        detectors::open_channel(kind, detectors::Millis(c.get<long>("refine.timeout_ms", 10000))));
  } else {
    throw ConfigError("refine.polisher must be model, identity, exec:<cmd> or tcp:<host>:<port>");
  }
  refine::RefineConfig rc;
  rc.k = c.get<std::size_t>("refine.k", rc.k);
  rc.instruction = c.get<std::string>("refine.instruction", rc.instruction);
  const auto limit = c.get<std::size_t>("refine.n", SIZE_MAX);
  const auto base_seed = r.seed("refine");
  std::vector<AttackRecord> out;
  std::string report;
  std::uint64_t queries = 0;
  std::uint64_t pre = 0;
  std::size_t partial = 0;
  for (const auto& a : recs) {
    if (out.size() >= limit) {
      break;
    }
    rc.seed = derive_seed(base_seed, fnv1a(a.id));
    const auto res = refine::refine_document(a.id, a.adv_text, a.ai_text, oracle, *polisher, lm, rc);
    out.push_back({a.id, a.ai_text, res.text});
    report += refine::report_json_line(res) + "\n";
    queries += res.queries;
    pre += res.precondition_queries;
    partial += res.partial ? 1 : 0;
  }
  write_attack_records(r.path(artifacts::kRefined), out);
  write_text(r.path("refine_report.jsonl"), report);
  r.manifest(r.path(artifacts::kRefined), inputs,
             {{"polisher", polisher->backend()}, {"k", rc.k}, {"n", out.size()}, {"detector_queries", queries},
              {"precondition_queries", pre}, {"partial", partial}});
  spdlog::info("refine: {} documents, {} candidate queries", out.size(), queries);
}

void evaluate_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto input_name = c.get<std::string>("evaluate.input", artifacts::kAttack);
  const auto input_path = r.opt.out_dir / input_name;
  if (!fs::exists(input_path)) {
    throw StageOrderError("evaluate needs " + input_path.string() + "; run 'attack' or 'refine' first");
  }
  const auto held_path = r.input(artifacts::kHeldout, "gen-corpus");
  const auto lm_path = r.input(artifacts::kLmDocs, "gen-corpus");
  std::vector<fs::path> inputs{input_path, held_path, lm_path};
  const auto di = detector_inputs(r);
  inputs.insert(inputs.end(), di.begin(), di.end());
  for (const auto& p : inputs) {
    try {
      verify_artifact(p);
    } catch (const ArtifactMismatch& e) {
      if (!r.opt.force) {
        throw;
      }
      spdlog::warn("evaluate --force: {}", e.what());
    }
  }
  const auto input_manifest = read_manifest(input_path);
  detectors::DetectorOracle oracle(target_detector(r), tau_of(r));
  const auto tau = oracle.threshold();
  const auto lm = eval_lm(r);
  const auto cons = constraints(r);

  std::vector<double> human_scores;
  std::vector<double> machine_scores;
  std::vector<eval::AttackSample> clean;
  for (const auto& d : corpus::read_documents(held_path)) {
    const double s = oracle.score(d.tokens);
    if (d.label == Label::AI) {
      machine_scores.push_back(s);
      clean.push_back({d.id, d.tokens, d.tokens, s});
    } else {
      human_scores.push_back(s);
    }
  }
  std::vector<eval::AttackSample> samples;
  std::vector<double> adv_scores;
  for (const auto& a : read_attack_records(input_path)) {
    auto adv = corpus::tokenize(a.adv_text);
    const double s = adv.empty() ? 1.0 : oracle.score(adv);
    adv_scores.push_back(s);
    samples.push_back({a.id, corpus::tokenize(a.ai_text), std::move(adv), s});
  }
  const auto attack_queries = input_manifest.extra.value("detector_queries", std::uint64_t{0});
  auto report = eval::summarize_attack(input_name, samples, tau, cons, lm, attack_queries);
  report.roc = eval::roc(human_scores, adv_scores);
  auto clean_report = eval::summarize_attack("clean", clean, tau, cons, lm, 0);
  clean_report.roc = eval::roc(human_scores, machine_scores);

  ordered_json j;
  j["attack"] = nlohmann::json::parse(report.to_json());
  j["clean"] = nlohmann::json::parse(clean_report.to_json());
  const double clean_tpr = clean_report.roc->tpr_at_1pct_fpr;
  j["tpr_at_1pct_fpr_relative_drop"] = clean_tpr > 0.0 ? 1.0 - report.roc->tpr_at_1pct_fpr / clean_tpr : 0.0;
  j["evaluation_queries"] = oracle.query_count();
  j["forced"] = r.opt.force;
  write_text(r.path(artifacts::kMetrics), j.dump(2));
  write_text(r.path("metrics.csv"), eval::MetricsReport::csv_header() + "\n" + clean_report.csv_row() + "\n" +
                                        report.csv_row() + "\n");
  eval::write_roc_csv(r.path("roc.csv"), *report.roc);
  eval::write_roc_csv(r.path("roc_clean.csv"), *clean_report.roc);
  r.manifest(r.path(artifacts::kMetrics), inputs);
  spdlog::info("evaluate: ASR {:.3f} (constrained {:.3f}), AUROC {:.3f} vs clean {:.3f}", report.asr,
               report.constrained_asr, report.roc->auroc, clean_report.roc->auroc);
}

void defend_stage(const Run& r) {
  const auto& c = r.cfg();
  const auto det_path = r.input(artifacts::kDetector, "train-detector");
  const auto base = detectors::load_detector(det_path);
  const auto* sup = dynamic_cast<const detectors::SupervisedDetector*>(base.get());
  if (sup == nullptr) {
    throw ConfigError("defend requires detector.backend supervised");
  }
  const auto input_name = c.get<std::string>("defend.input", artifacts::kAttack);
  const auto input_path = r.opt.out_dir / input_name;
  if (!fs::exists(input_path)) {
    throw StageOrderError("defend needs " + input_path.string() + "; run 'attack' or 'refine' first");
  }
  const auto docs_path = r.input(artifacts::kDetectorDocs, "gen-corpus");
  const auto held_path = r.input(artifacts::kHeldout, "gen-corpus");
  const auto recs = read_attack_records(input_path);
  const auto train_fraction = c.get<double>("defend.train_fraction", 0.5);
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("defend.train_fraction must be in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(recs.size()));
  std::vector<TokenSeq> mash_train;
  std::vector<TokenSeq> mash_test;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    (i < n_train ? mash_train : mash_test).push_back(corpus::tokenize(recs[i].adv_text));
  }
  std::erase_if(mash_test, [](const TokenSeq& t) { return t.empty(); });
  if (mash_test.empty()) {
    throw ContractViolation("defend: no MASH outputs left for testing");
  }
  const auto docs = corpus::read_documents(docs_path);
  const auto n_machine = c.get<std::size_t>("defend.clean_machine", 0);
  const auto humans_all = tokens_of(docs, Label::Human);
  const auto machines_all = tokens_of(docs, Label::AI);
  const auto n_ai = std::min(n_machine, machines_all.size()) + mash_train.size();
  std::vector<TokenSeq> humans(humans_all.begin(), humans_all.begin() + static_cast<std::ptrdiff_t>(
                                                                          std::min(n_ai, humans_all.size())));
  std::vector<TokenSeq> machines(machines_all.begin(),
                                 machines_all.begin() + static_cast<std::ptrdiff_t>(std::min(n_machine, machines_all.size())));
  std::vector<detectors::LabeledSeq> clean_test;
  for (const auto& d : corpus::read_documents(held_path)) {
    clean_test.push_back({d.tokens, d.label});
  }
  eval::DefenseConfig dc;
  dc.tau = tau_of(r);
  dc.fine_tune.lr = c.get<double>("defend.lr", dc.fine_tune.lr);
  dc.fine_tune.l2 = c.get<double>("defend.l2", dc.fine_tune.l2);
  dc.fine_tune.max_epochs = c.get<std::size_t>("defend.max_epochs", dc.fine_tune.max_epochs);
  const auto res = eval::adversarial_defense(*sup, humans, machines, mash_train, clean_test, mash_test, dc);
  nn::save_checkpoint(r.path(artifacts::kDefended), res.detector.to_checkpoint());
  write_text(r.path(artifacts::kDefense), eval::defense_json(res));
  r.manifest(r.path(artifacts::kDefended), {det_path, input_path, docs_path, held_path});
  r.manifest(r.path(artifacts::kDefense), {det_path, input_path, docs_path, held_path},
             {{"mash_train", mash_train.size()}, {"mash_test", mash_test.size()}});
  spdlog::info("defend: ASR {:.3f} -> {:.3f}, clean accuracy {:.3f} -> {:.3f}", res.before.asr, res.after.asr,
               res.before.clean_accuracy, res.after.clean_accuracy);
}

const std::map<std::string, std::function<void(const Run&)>>& registry() {
  static const std::map<std::string, std::function<void(const Run&)>> stages{
      {"gen-corpus", gen_corpus},     {"train-detector", train_detector}, {"build-pairs", build_pairs_stage},
      {"train-sft", train_sft_stage}, {"mine-prefs", mine_prefs},         {"train-dpo", train_dpo_stage},
      {"attack", attack_stage},       {"refine", refine_stage},           {"evaluate", evaluate_stage},
      {"defend", defend_stage},
  };
  return stages;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen-corpus", "train-detector", "build-pairs", "train-sft",
                                              "mine-prefs", "train-dpo",      "attack",      "refine",
                                              "evaluate",   "defend"};
  return names;
}

std::uint64_t stage_seed(std::uint64_t master, const std::string& name) { return derive_seed(master, fnv1a(name)); }

void run_stage(const std::string& stage, const StageOptions& opt) {
  const auto it = registry().find(stage);
  if (it == registry().end()) {
    throw ConfigError("unknown subcommand '" + stage + "'");
  }
  fs::create_directories(opt.out_dir);
  it->second(Run{opt, stage});
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
    return 2;
  }
  if (dynamic_cast<const StageOrderError*>(&e) != nullptr || dynamic_cast<const ArtifactMismatch*>(&e) != nullptr) {
    return 3;
  }
  return 4;
}

}  // namespace mash::pipeline
