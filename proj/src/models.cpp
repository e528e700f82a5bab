#include "proofgym/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace proofgym {

namespace {

constexpr std::size_t kPredictBatch = 64;

std::vector<std::string> split_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - top);
  for (double& x : p) x /= sum;
  return p;
}

std::vector<std::vector<double>> snapshot(const ParamStore& params) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params[static_cast<ParamId>(i)].value);
  return out;
}

void restore(ParamStore& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[static_cast<ParamId>(i)].value = values[i];
}

}  // namespace

const char* to_string(Task task) {
  switch (task) {
    case Task::PosEval: return "pos";
    case Task::ToyTactic: return "tac";
    case Task::GenericTactic: return "gtac";
    case Task::Argument: return "arg";
  }
  return "?";
}

Task task_from_string(const std::string& text) {
  for (Task t : {Task::PosEval, Task::ToyTactic, Task::GenericTactic, Task::Argument})
    if (text == to_string(t)) return t;
  throw ModelError("unknown task: " + text);
}

ClassSpace ClassSpace::for_task(Task task, const TacticClassMap& classes, const DepthBin& bins) {
  ClassSpace space;
  space.task = task;
  switch (task) {
    case Task::PosEval: space.names = bins.names; break;
    case Task::ToyTactic:
      for (int c = 1; c <= kToyClasses; ++c) space.names.push_back(tactic_text(toy_action(c)));
      break;
    case Task::GenericTactic: space.names = classes.classes(); break;
    case Task::Argument: space.names = {"absent", "present"}; break;
  }
  return space;
}

int toy_class(const RewriteTactic& t) {
  if (t.pos.rank < 1 || t.pos.rank > kToyMaxPosition) throw ModelError("position outside the toy class space");
  return (t.pos.rank - 1) * 2 + (t.law == Law::LeftId ? 0 : 1) + 1;
}

RewriteTactic toy_action(int cls) {
  if (cls < 1 || cls > kToyClasses) throw ModelError("toy class out of range");
  return RewriteTactic{Position{(cls - 1) / 2 + 1}, (cls - 1) % 2 == 0 ? Law::LeftId : Law::RightId};
}

std::map<std::pair<std::string, StateId>, int> record_steps_below(const std::vector<TraceRecord>& records) {
  std::map<std::pair<std::string, StateId>, const TraceRecord*> by_state;
  for (const auto& r : records) by_state[{r.lemma, r.state_id}] = &r;
  std::map<std::pair<std::string, StateId>, int> out;
  std::function<int(const std::string&, StateId)> count = [&](const std::string& lemma, StateId s) {
    const auto key = std::make_pair(lemma, s);
    if (auto it = out.find(key); it != out.end()) return it->second;
    const auto rec = by_state.find(key);
    int n = 0;
    if (rec != by_state.end()) {
      n = 1;
      for (StateId c : rec->second->children) n += count(lemma, c);
    }
    out[key] = n;
    return n;
  };
  for (const auto& r : records) count(r.lemma, r.state_id);
  return out;
}

std::vector<Example> make_examples(const std::vector<TraceRecord>& records, Task task, const TacticClassMap& classes,
                                   const DepthBin& bins, ExampleStats* stats) {
  std::vector<Example> out;
  std::size_t skipped = 0;
  std::map<std::pair<std::string, StateId>, int> below;
  if (task == Task::PosEval) below = record_steps_below(records);
  for (const auto& r : records) {
    Example ex{r.lemma, r.state_id, r.ctx, r.goal, 0, {}};
    switch (task) {
      case Task::PosEval: ex.label = bin_depth(below.at({r.lemma, r.state_id}), bins) - 1; break;
      case Task::ToyTactic: {
        const Tactic t = tactic_from_info(r.tactic);
        const auto* rw = std::get_if<RewriteTactic>(&t);
        if (rw == nullptr || rw->pos.rank < 1 || rw->pos.rank > kToyMaxPosition) {
          ++skipped;
          continue;
        }
        ex.label = toy_class(*rw) - 1;
        break;
      }
      case Task::GenericTactic: {
        const auto id = classes.class_id(r.tactic.raw);
        if (!id) {
          ++skipped;
          continue;
        }
        ex.label = *id;
        break;
      }
      case Task::Argument: {
        if (r.ctx.empty()) {
          ++skipped;
          continue;
        }
        for (const auto& e : r.ctx) {
          const bool used = std::any_of(r.tactic.args.begin(), r.tactic.args.end(), [&](const TacticArg& a) {
            return a.kind == ArgKind::Local && a.value == e.name;
          });
          ex.arg_flags.push_back(used);
        }
        break;
      }
    }
    out.push_back(std::move(ex));
  }
  if (stats != nullptr) stats->skipped = skipped;
  return out;
}

std::pair<std::vector<Example>, std::vector<Example>> carve_by_lemma(const std::vector<Example>& examples,
                                                                     double fraction, std::uint64_t seed) {
  std::vector<std::string> lemmas;
  for (const auto& ex : examples)
    if (std::find(lemmas.begin(), lemmas.end(), ex.lemma) == lemmas.end()) lemmas.push_back(ex.lemma);
  Rng rng(seed);
  rng.shuffle(lemmas.begin(), lemmas.end());
  std::size_t take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(lemmas.size())));
  if (fraction > 0 && lemmas.size() >= 2) take = std::clamp<std::size_t>(take, 1, lemmas.size() - 1);
  const std::set<std::string> second(lemmas.begin(), lemmas.begin() + static_cast<std::ptrdiff_t>(take));
  std::pair<std::vector<Example>, std::vector<Example>> out;
  for (const auto& ex : examples) (second.contains(ex.lemma) ? out.second : out.first).push_back(ex);
  return out;
}

// ---------------------------------------------------------------------------
// Features and baselines

std::size_t token_edit_distance(const std::string& a, const std::string& b) {
  const auto x = split_tokens(a);
  const auto y = split_tokens(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

HeuristicFeatures extract_features(const TermStore& store, const std::vector<ContextEntry>& ctx, TermId goal) {
  HeuristicFeatures f;
  f.ctx_size = static_cast<double>(ctx.size());
  f.goal_size = static_cast<double>(expanded_size(store, goal));
  f.hyp_count = static_cast<double>(ctx.size());
  const std::string g = print_sexpr(store, goal);
  for (const auto& e : ctx)
    f.min_edit_distance =
        std::min(f.min_edit_distance, static_cast<double>(token_edit_distance(print_sexpr(store, e.type), g)));
  return f;
}

std::vector<double> LinearBaseline::scores(const std::vector<double>& x) const {
  std::vector<double> s(static_cast<std::size_t>(classes));
  for (std::size_t c = 0; c < s.size(); ++c) {
    double v = b[c];
    for (std::size_t k = 0; k < x.size(); ++k) v += w[c][k] * (x[k] - mean[k]) / scale[k];
    s[c] = v;
  }
  return s;
}

int LinearBaseline::predict(const std::vector<double>& x) const { return argmax(scores(x)); }

// Pegasos-style stochastic subgradient steps; the bias is an extra,
// regularized feature fixed at 1.
LinearBaseline train_linear_baseline(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                     int classes, const LinearConfig& config) {
  if (x.empty() || x.size() != y.size()) throw ModelError("linear baseline needs matching non-empty data");
  const std::size_t d = x[0].size();
  LinearBaseline m;
  m.classes = classes;
  m.mean.assign(d, 0);
  m.scale.assign(d, 0);
  for (const auto& row : x)
    for (std::size_t k = 0; k < d; ++k) m.mean[k] += row[k];
  for (double& v : m.mean) v /= static_cast<double>(x.size());
  for (const auto& row : x)
    for (std::size_t k = 0; k < d; ++k) m.scale[k] += (row[k] - m.mean[k]) * (row[k] - m.mean[k]);
  for (double& v : m.scale) {
    v = std::sqrt(v / static_cast<double>(x.size()));
    if (v == 0) v = 1;
  }
  std::vector<std::vector<double>> z(x.size(), std::vector<double>(d + 1, 1.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k < d; ++k) z[i][k] = (x[i][k] - m.mean[k]) / m.scale[k];

  std::vector<std::vector<double>> w(static_cast<std::size_t>(classes), std::vector<double>(d + 1, 0.0));
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);
  long long t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (config.lambda * static_cast<double>(t));
      for (std::size_t c = 0; c < w.size(); ++c) {
        const double label = y[i] == static_cast<int>(c) ? 1.0 : -1.0;
        double margin = 0;
        for (std::size_t k = 0; k <= d; ++k) margin += w[c][k] * z[i][k];
        margin *= label;
        const double shrink = 1.0 - eta * config.lambda;
        for (std::size_t k = 0; k <= d; ++k) w[c][k] *= shrink;
        if (margin < 1)
          for (std::size_t k = 0; k <= d; ++k) w[c][k] += eta * label * z[i][k];
      }
    }
  }
  for (auto& wc : w) {
    m.b.push_back(wc[d]);
    wc.pop_back();
  }
  m.w = std::move(w);
  return m;
}

int constant_baseline(const std::vector<int>& labels) {
  if (labels.empty()) throw ModelError("constant baseline needs labels");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  int best = counts.begin()->first;
  for (const auto& [l, n] : counts)
    if (n > counts[best]) best = l;
  return best;
}

// ---------------------------------------------------------------------------
// Metrics

Metrics score(const std::vector<int>& truth, const std::vector<int>& predicted, int classes) {
  if (truth.size() != predicted.size()) throw ModelError("label count mismatch");
  const auto k = static_cast<std::size_t>(classes);
  Metrics m;
  m.n = truth.size();
  m.confusion.assign(k, std::vector<std::size_t>(k, 0));
  m.per_class.assign(k, 0);
  m.per_class_count.assign(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    ++m.confusion.at(t).at(p);
    ++m.per_class_count[t];
    if (t == p) ++correct;
  }
  m.accuracy = m.n == 0 ? 0 : static_cast<double>(correct) / static_cast<double>(m.n);
  for (std::size_t c = 0; c < k; ++c)
    if (m.per_class_count[c] > 0)
      m.per_class[c] = static_cast<double>(m.confusion[c][c]) / static_cast<double>(m.per_class_count[c]);
  return m;
}

nlohmann::ordered_json metrics_json(const Metrics& m, const ClassSpace& space) {
  nlohmann::ordered_json j;
  j["task"] = to_string(space.task);
  j["n"] = m.n;
  j["accuracy"] = m.accuracy;
  auto& per = j["per_class"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c)
    per.push_back({{"id", c + 1}, {"name", space.names.at(c)}, {"count", m.per_class_count[c]},
                   {"accuracy", m.per_class[c]}});
  j["confusion"] = m.confusion;
  return j;
}

std::vector<PRPoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ModelError("score/label count mismatch");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  std::vector<PRPoint> out;
  if (positives == 0) return out;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (labels[order[i]] ? tp : fp) += 1;
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
    out.push_back({scores[order[i]], static_cast<double>(tp) / static_cast<double>(tp + fp),
                   static_cast<double>(tp) / static_cast<double>(positives)});
  }
  if (out.back().threshold > 0) out.push_back({0.0, out.back().precision, 1.0});
  return out;
}

double recall_at_precision(const std::vector<PRPoint>& curve, double min_precision) {
  double best = 0;
  for (const auto& p : curve)
    if (p.precision >= min_precision) best = std::max(best, p.recall);
  return best;
}

double average_precision(const std::vector<PRPoint>& curve) {
  double area = 0, recall = 0;
  for (const auto& p : curve) {
    area += (p.recall - recall) * p.precision;
    recall = p.recall;
  }
  return area;
}

std::string pr_csv(const std::vector<PRPoint>& curve) {
  std::string out = "precision,recall\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", p.precision, p.recall);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

int argmax(const std::vector<double>& p) {
  if (p.empty()) throw ModelError("argmax of an empty vector");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

Model Model::create(const ModelConfig& config, ClassSpace space, std::vector<std::string> symbols) {
  if (space.task != config.task) throw ModelError("class space does not match the task");
  if (space.size() < 2) throw ModelError("a classifier needs at least two classes");
  Model m;
  m.config_ = config;
  m.space_ = std::move(space);
  Rng rng(config.seed);
  m.net_ = EmbedNet::create(m.params_, config.cell, config.dim, std::move(symbols), rng);
  const int in = config.task == Task::Argument ? 2 * config.dim : config.dim;
  m.out_w_ = m.params_.add("head.W", m.space_.size(), in, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  m.out_b_ = m.params_.add("head.b", m.space_.size(), 1, rng, 0.0);
  return m;
}

std::string Model::serialize() const {
  nlohmann::ordered_json header;
  header["format"] = "proofgym-model";
  header["version"] = 1;
  header["task"] = to_string(config_.task);
  header["cell"] = to_string(config_.cell);
  header["dim"] = config_.dim;
  header["drop_implicit"] = config_.drop_implicit;
  header["seed"] = config_.seed;
  header["inference_seed"] = config_.inference_seed;
  header["classes"] = space_.names;
  header["symbols"] = net_.symbols;
  return header.dump() + "\n" + params_.serialize();
}

Model Model::parse(const std::string& text) {
  const auto nl = text.find('\n');
  if (nl == std::string::npos) throw ModelError("checkpoint has no header line");
  nlohmann::ordered_json h;
  try {
    h = nlohmann::ordered_json::parse(text.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("bad checkpoint header: ") + e.what());
  }
  if (h.value("format", "") != "proofgym-model") throw ModelError("not a model checkpoint");
  ModelConfig config;
  config.task = task_from_string(h.at("task").get<std::string>());
  config.cell = cell_from_string(h.at("cell").get<std::string>());
  config.dim = h.at("dim").get<int>();
  config.drop_implicit = h.at("drop_implicit").get<bool>();
  config.seed = h.at("seed").get<std::uint64_t>();
  config.inference_seed = h.at("inference_seed").get<std::uint64_t>();
  ClassSpace space{config.task, h.at("classes").get<std::vector<std::string>>()};
  Model m = create(config, std::move(space), h.at("symbols").get<std::vector<std::string>>());
  try {
    m.params_.deserialize(text.substr(nl + 1));
  } catch (const std::exception& e) {
    throw ModelError(std::string("bad checkpoint parameters: ") + e.what());
  }
  return m;
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint " + path);
  out << serialize();
}

NodeId Model::batch_loss(Graph& graph, const TermStore& store, const std::vector<const Example*>& batch,
                         std::uint64_t pass_seed, double input_dropout,
                         const std::vector<std::vector<std::size_t>>* entries, double pos_weight) {
  Embedder e(graph, net_, store,
             EmbedConfig{.drop_implicit = config_.drop_implicit, .pass_seed = pass_seed, .input_dropout = input_dropout});
  std::vector<NodeId> losses;
  double total = 0;
  const NodeId bias = graph.param(out_b_);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = *batch[i];
    const StateEmbedding st = e.embed_state(ex.ctx, ex.goal);
    if (config_.task != Task::Argument) {
      losses.push_back(graph.softmax_xent(graph.add(graph.matvec(out_w_, st.state), bias), ex.label));
      total += 1;
      continue;
    }
    std::vector<std::size_t> all;
    if (entries == nullptr) {
      all.resize(ex.ctx.size());
      std::iota(all.begin(), all.end(), 0);
    }
    for (std::size_t j : entries != nullptr ? (*entries)[i] : all) {
      const NodeId x = graph.concat(std::vector<NodeId>{st.state, st.entries[j]});
      const bool present = ex.arg_flags.at(j);
      const double weight = present ? pos_weight : 1.0;
      losses.push_back(graph.softmax_xent(graph.add(graph.matvec(out_w_, x), bias), present ? 1 : 0, weight));
      total += weight;
    }
  }
  if (losses.empty()) return kNoNode;
  return graph.weighted_sum(losses, 1.0 / total);
}

std::vector<std::vector<double>> Model::predict(const TermStore& store, const std::vector<Example>& states) {
  if (config_.task == Task::Argument) throw ModelError("predict called on an argument model");
  std::vector<std::vector<double>> out;
  for (std::size_t lo = 0; lo < states.size(); lo += kPredictBatch) {
    const std::size_t hi = std::min(states.size(), lo + kPredictBatch);
    Graph g(params_);
    Embedder e(g, net_, store, EmbedConfig{.drop_implicit = config_.drop_implicit, .pass_seed = config_.inference_seed});
    const NodeId bias = g.param(out_b_);
    std::vector<NodeId> logits;
    for (std::size_t i = lo; i < hi; ++i) {
      const StateEmbedding st = e.embed_state(states[i].ctx, states[i].goal);
      logits.push_back(g.add(g.matvec(out_w_, st.state), bias));
    }
    g.forward();
    for (NodeId l : logits) out.push_back(softmax(g.value(l)));
  }
  return out;
}

std::vector<double> Model::predict(const TermStore& store, const std::vector<ContextEntry>& ctx, TermId goal) {
  return predict(store, std::vector<Example>{Example{"", 0, ctx, goal, 0, {}}}).front();
}

std::vector<std::vector<double>> Model::argument_scores(const TermStore& store, const std::vector<Example>& states) {
  if (config_.task != Task::Argument) throw ModelError("argument_scores called on a classifier");
  std::vector<std::vector<double>> out;
  for (std::size_t lo = 0; lo < states.size(); lo += kPredictBatch) {
    const std::size_t hi = std::min(states.size(), lo + kPredictBatch);
    Graph g(params_);
    Embedder e(g, net_, store, EmbedConfig{.drop_implicit = config_.drop_implicit, .pass_seed = config_.inference_seed});
    const NodeId bias = g.param(out_b_);
    std::vector<std::vector<NodeId>> logits;
    for (std::size_t i = lo; i < hi; ++i) {
      const StateEmbedding st = e.embed_state(states[i].ctx, states[i].goal);
      auto& row = logits.emplace_back();
      for (NodeId entry : st.entries)
        row.push_back(g.add(g.matvec(out_w_, g.concat(std::vector<NodeId>{st.state, entry})), bias));
    }
    g.forward();
    for (const auto& row : logits) {
      auto& scores = out.emplace_back();
      for (NodeId l : row) scores.push_back(softmax(g.value(l))[1]);
    }
  }
  return out;
}

Metrics evaluate(Model& model, const TermStore& store, const std::vector<Example>& examples) {
  const auto dist = model.predict(store, examples);
  std::vector<int> truth, predicted;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    truth.push_back(examples[i].label);
    predicted.push_back(argmax(dist[i]));
  }
  return score(truth, predicted, model.space().size());
}

ArgumentEval evaluate_arguments(Model& model, const TermStore& store, const std::vector<Example>& examples) {
  const auto scores = model.argument_scores(store, examples);
  std::vector<double> flat;
  std::vector<bool> labels;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    flat.insert(flat.end(), scores[i].begin(), scores[i].end());
    labels.insert(labels.end(), examples[i].arg_flags.begin(), examples[i].arg_flags.end());
  }
  ArgumentEval out;
  out.curve = pr_curve(flat, labels);
  out.recall_at_10 = recall_at_precision(out.curve, 0.10);
  out.average_precision = average_precision(out.curve);
  out.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  out.pairs = labels.size();
  return out;
}

TrainReport train_classifier(Model& model, const TermStore& store, const std::vector<Example>& train,
                             const std::vector<Example>& valid, const TrainConfig& config) {
  if (train.empty()) throw ModelError("empty training split");
  std::set<std::string> train_lemmas;
  for (const auto& ex : train) train_lemmas.insert(ex.lemma);
  for (const auto& ex : valid)
    if (train_lemmas.contains(ex.lemma)) throw ModelError("lemma '" + ex.lemma + "' is in both training and validation");
  const bool argument = model.config().task == Task::Argument;
  auto log = [&](const std::string& line) {
    if (config.log) config.log(line);
  };

  std::size_t positives = 0, negatives = 0;
  if (argument) {
    for (const auto& ex : train)
      for (bool f : ex.arg_flags) (f ? positives : negatives) += 1;
    if (positives == 0) throw ModelError("no positive argument examples in the training split");
  } else {
    std::vector<bool> seen(static_cast<std::size_t>(model.space().size()), false);
    for (const auto& ex : train) seen.at(static_cast<std::size_t>(ex.label)) = true;
    const auto absent = std::count(seen.begin(), seen.end(), false);
    if (absent > 0) log("warning: " + std::to_string(absent) + " classes have no training examples");
  }
  const double pos_weight = argument ? static_cast<double>(negatives) / static_cast<double>(positives) : 1.0;
  const double keep_negative =
      argument ? std::min(1.0, static_cast<double>(config.negatives_per_positive * positives) /
                                   std::max(1.0, static_cast<double>(negatives)))
               : 1.0;

  auto validate = [&]() -> double {
    if (valid.empty()) return 0;
    if (argument) return evaluate_arguments(model, store, valid).average_precision;
    return evaluate(model, store, valid).accuracy;
  };

  ParamStore& params = model.params();
  Adam adam;
  adam.lr = config.lr;
  TrainReport report;
  report.best_valid = validate();
  auto best = snapshot(params);
  int stale = 0;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(mix64(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.batch)) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(config.batch));
      std::vector<const Example*> batch;
      std::vector<std::vector<std::size_t>> entries;
      for (std::size_t k = lo; k < hi; ++k) {
        const Example& ex = train[order[k]];
        batch.push_back(&ex);
        if (!argument) continue;
        auto& chosen = entries.emplace_back();
        for (std::size_t j = 0; j < ex.arg_flags.size(); ++j)
          if (ex.arg_flags[j] || rng.uniform() < keep_negative) chosen.push_back(j);
      }
      ++step;
      Graph g(params, GraphOptions{.weight_dropout = config.weight_dropout,
                                   .dropout_seed = mix64(config.seed ^ 0xd5d5d5d5ULL, step)});
      const NodeId loss = model.batch_loss(g, store, batch, mix64(config.seed, step), config.input_dropout,
                                           argument ? &entries : nullptr, pos_weight);
      if (loss == kNoNode) continue;
      g.forward();
      params.zero_grad();
      g.backward(loss);
      adam.step(params);
      loss_sum += g.scalar(loss);
      ++batches;
    }
    EpochStats s;
    s.epoch = epoch;
    s.loss = batches == 0 ? 0 : loss_sum / static_cast<double>(batches);
    s.valid_accuracy = validate();
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(s);
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d loss %.4f valid %.4f (%.1fs)", epoch, s.loss, s.valid_accuracy,
                  s.seconds);
    log(buf);
    if (valid.empty() || s.valid_accuracy > report.best_valid) {
      report.best_valid = s.valid_accuracy;
      report.best_epoch = epoch;
      best = snapshot(params);
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  restore(params, best);
  return report;
}

}  // namespace proofgym
