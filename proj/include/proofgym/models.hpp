#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "proofgym/autodiff.hpp"
#include "proofgym/embed.hpp"
#include "proofgym/proof.hpp"
#include "proofgym/record.hpp"
#include "proofgym/tactic_classes.hpp"
#include "proofgym/trace.hpp"

namespace proofgym {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task : std::uint8_t { PosEval, ToyTactic, GenericTactic, Argument };

const char* to_string(Task task);  // "pos", "tac", "gtac", "arg"
Task task_from_string(const std::string& text);

/// Class names of a task. Labels are 0-based indices into `names`; the
/// printed class ids are index + 1.
struct ClassSpace {
  Task task = Task::PosEval;
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
  static ClassSpace for_task(Task task, const TacticClassMap& classes = TacticClassMap::defaults(),
                             const DepthBin& bins = {});
};

inline constexpr int kToyMaxPosition = 9;
inline constexpr int kToyClasses = kToyMaxPosition * 2;

/// (pos - 1) * 2 + law + 1, in 1..18.
int toy_class(const RewriteTactic& t);
RewriteTactic toy_action(int cls);

/// A proof state with the label of one task.
struct Example {
  std::string lemma;
  StateId state = 0;
  std::vector<ContextEntry> ctx;
  TermId goal;
  int label = 0;               // 0-based class index (unused for Argument)
  std::vector<bool> arg_flags;  // Argument: one per context entry
};

/// Edges below each (lemma, state), computed from the records alone: one
/// for the state's own edge plus the counts of its children. States that
/// never appear as a parent count 0.
std::map<std::pair<std::string, StateId>, int> record_steps_below(const std::vector<TraceRecord>& records);

struct ExampleStats {
  std::size_t skipped = 0;  // records without a label for the task
};

/// PosEval: every record, label = bin of steps below. ToyTactic: rewrite
/// records. GenericTactic: records whose raw tactic is in the class map.
/// Argument: records with a non-empty context.
std::vector<Example> make_examples(const std::vector<TraceRecord>& records, Task task,
                                   const TacticClassMap& classes = TacticClassMap::defaults(),
                                   const DepthBin& bins = {}, ExampleStats* stats = nullptr);

/// Splits examples by lemma: about `fraction` of the lemmas (at least one
/// when there are two or more) go to the second part.
std::pair<std::vector<Example>, std::vector<Example>> carve_by_lemma(const std::vector<Example>& examples,
                                                                     double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Heuristic features and baselines

inline constexpr double kNoHypothesisDistance = 1000;

struct HeuristicFeatures {
  double ctx_size = 0;
  double goal_size = 0;
  double hyp_count = 0;
  double min_edit_distance = kNoHypothesisDistance;

  std::array<double, 4> values() const { return {ctx_size, goal_size, hyp_count, min_edit_distance}; }
};

/// Levenshtein distance over whitespace-separated tokens.
std::size_t token_edit_distance(const std::string& a, const std::string& b);

HeuristicFeatures extract_features(const TermStore& store, const std::vector<ContextEntry>& ctx, TermId goal);

struct LinearConfig {
  int epochs = 60;
  double lambda = 1e-4;
  std::uint64_t seed = 0;
};

/// One-vs-rest linear classifier with hinge loss and L2 regularization,
/// trained by stochastic subgradient descent on standardized features.
struct LinearBaseline {
  int classes = 0;
  std::vector<double> mean, scale;
  std::vector<std::vector<double>> w;
  std::vector<double> b;

  std::vector<double> scores(const std::vector<double>& x) const;
  int predict(const std::vector<double>& x) const;
};

LinearBaseline train_linear_baseline(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                     int classes, const LinearConfig& config = {});

/// Modal class, ties to the lowest id.
int constant_baseline(const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  std::size_t n = 0;
  double accuracy = 0;
  std::vector<double> per_class;  // NaN-free: classes without examples get 0
  std::vector<std::size_t> per_class_count;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
};

Metrics score(const std::vector<int>& truth, const std::vector<int>& predicted, int classes);
nlohmann::ordered_json metrics_json(const Metrics& m, const ClassSpace& space);

struct PRPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

/// Points for every distinct score used as threshold (predict present when
/// score >= threshold), in decreasing threshold order. Empty when there are
/// no positives.
std::vector<PRPoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& labels);
/// Highest recall among points with precision >= min_precision (0 if none).
double recall_at_precision(const std::vector<PRPoint>& curve, double min_precision);
/// Area under the step-wise precision-recall curve.
double average_precision(const std::vector<PRPoint>& curve);
std::string pr_csv(const std::vector<PRPoint>& curve);

// ---------------------------------------------------------------------------
// Neural models

struct ModelConfig {
  Task task = Task::ToyTactic;
  CellKind cell = CellKind::GRU;
  int dim = 128;
  bool drop_implicit = false;  // mid-level input
  std::uint64_t seed = 0;
  std::uint64_t inference_seed = 0x1f2e3d4c5b6a7988ULL;
};

/// Proof-state embedding followed by one fully-connected layer.
class Model {
 public:
  static Model create(const ModelConfig& config, ClassSpace space, std::vector<std::string> symbols);
  static Model load(const std::string& path);
  static Model parse(const std::string& text);
  void save(const std::string& path) const;
  std::string serialize() const;

  const ModelConfig& config() const { return config_; }
  const ClassSpace& space() const { return space_; }
  ParamStore& params() { return params_; }
  const EmbedNet& net() const { return net_; }

  /// Softmax distributions of a batch of states, with the frozen inference
  /// seed. Classification tasks only.
  std::vector<std::vector<double>> predict(const TermStore& store, const std::vector<Example>& states);
  std::vector<double> predict(const TermStore& store, const std::vector<ContextEntry>& ctx, TermId goal);
  /// Probability that each context entry is an argument (Argument task).
  std::vector<std::vector<double>> argument_scores(const TermStore& store, const std::vector<Example>& states);

  /// Loss of a batch on `graph`: mean cross-entropy over states (or over
  /// the given entry pairs for the Argument task).
  NodeId batch_loss(Graph& graph, const TermStore& store, const std::vector<const Example*>& batch,
                    std::uint64_t pass_seed, double input_dropout,
                    const std::vector<std::vector<std::size_t>>* entries = nullptr, double pos_weight = 1);

 private:
  Model() = default;

  ModelConfig config_;
  ClassSpace space_;
  ParamStore params_;
  EmbedNet net_;
  ParamId out_w_ = -1, out_b_ = -1;
};

/// argmax, ties to the lowest index.
int argmax(const std::vector<double>& p);

struct TrainConfig {
  int batch = 32;
  double lr = 0.001;
  int max_epochs = 50;
  int patience = 5;
  double input_dropout = 0;
  double weight_dropout = 0;
  std::uint64_t seed = 0;
  int negatives_per_positive = 4;  // Argument task subsampling
  std::function<void(const std::string&)> log = {};
};

struct EpochStats {
  int epoch = 0;
  double loss = 0;
  double valid_accuracy = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 0: initialization kept
  double best_valid = 0;
};

/// Mini-batch Adam with early stopping on validation accuracy (average
/// precision for the Argument task); the best parameters are restored.
TrainReport train_classifier(Model& model, const TermStore& store, const std::vector<Example>& train,
                             const std::vector<Example>& valid, const TrainConfig& config);

Metrics evaluate(Model& model, const TermStore& store, const std::vector<Example>& examples);

struct ArgumentEval {
  std::vector<PRPoint> curve;
  double recall_at_10 = 0;
  double average_precision = 0;
  std::size_t positives = 0;
  std::size_t pairs = 0;
};

ArgumentEval evaluate_arguments(Model& model, const TermStore& store, const std::vector<Example>& examples);

}  // namespace proofgym
