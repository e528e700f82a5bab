#include "proofgym/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

namespace proofgym {

// ---------------------------------------------------------------------------
// Parameters

ParamId ParamStore::add(const std::string& name, int rows, int cols, Rng& rng, double scale) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("tensor '" + name + "' needs a positive shape");
  if (index_.contains(name)) throw std::invalid_argument("duplicate tensor '" + name + "'");
  Tensor t{name, rows, cols, {}, {}};
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  t.value.resize(n);
  t.grad.assign(n, 0.0);
  for (double& x : t.value) x = scale == 0 ? 0.0 : rng.uniform(-scale, scale);
  const auto id = static_cast<ParamId>(tensors_.size());
  tensors_.push_back(std::move(t));
  index_.emplace(name, id);
  return id;
}

ParamId ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no tensor named '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

std::string ParamStore::serialize() const {
  std::string out;
  char buf[40];
  for (const auto& t : tensors_) {
    out += t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols);
    for (double x : t.value) {
      std::snprintf(buf, sizeof buf, " %a", x);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void ParamStore::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    int rows = 0, cols = 0;
    if (!(fields >> name >> rows >> cols)) throw std::runtime_error("malformed tensor line");
    Tensor& t = (*this)[find(name)];
    if (t.rows != rows || t.cols != cols) throw std::runtime_error("shape mismatch for tensor '" + name + "'");
    std::string word;
    for (double& x : t.value) {
      if (!(fields >> word)) throw std::runtime_error("tensor '" + name + "' is truncated");
      char* end = nullptr;
      x = std::strtod(word.c_str(), &end);
      if (end == word.c_str() || *end != '\0') throw std::runtime_error("bad number in tensor '" + name + "'");
    }
    if (fields >> word) throw std::runtime_error("tensor '" + name + "' has extra values");
    ++seen;
  }
  if (seen != tensors_.size()) throw std::runtime_error("checkpoint does not cover every tensor");
}

void Adam::step(ParamStore& params) {
  if (m.size() != params.size()) {
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[static_cast<ParamId>(i)].size(), 0.0);
      v[i].assign(params[static_cast<ParamId>(i)].size(), 0.0);
    }
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[static_cast<ParamId>(i)];
    auto& mi = m[i];
    auto& vi = v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      mi[k] = beta1 * mi[k] + (1.0 - beta1) * g;
      vi[k] = beta2 * vi[k] + (1.0 - beta2) * g * g;
      p.value[k] -= lr * (mi[k] / c1) / (std::sqrt(vi[k] / c2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Graph construction

const char* to_string(Op op) {
  switch (op) {
    case Op::Input: return "Input";
    case Op::ParamVec: return "ParamVec";
    case Op::Gather: return "Gather";
    case Op::MatVec: return "MatVec";
    case Op::Add: return "Add";
    case Op::Mul: return "Mul";
    case Op::Sigmoid: return "Sigmoid";
    case Op::Tanh: return "Tanh";
    case Op::OneMinus: return "OneMinus";
    case Op::Concat: return "Concat";
    case Op::Dropout: return "Dropout";
    case Op::SoftmaxXent: return "SoftmaxXent";
    case Op::SumAll: return "SumAll";
    case Op::WeightedSum: return "WeightedSum";
  }
  return "?";
}

std::size_t detail::ShareKeyHash::operator()(const ShareKey& k) const noexcept {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(k.op), static_cast<std::uint64_t>(k.param) + 1);
  h = mix64(h, static_cast<std::uint64_t>(k.row) + 1);
  h = mix64(h, std::bit_cast<std::uint64_t>(k.scalar));
  for (NodeId in : k.ins) h = mix64(h, in);
  return static_cast<std::size_t>(h);
}

Graph::Graph(ParamStore& params, GraphOptions options) : params_(params), options_(options) {}

NodeId Graph::push(Node node, bool shareable) {
  if (shareable && options_.share) {
    detail::ShareKey key{node.op, node.param, node.row, node.scalar, node.ins};
    if (const auto it = share_index_.find(key); it != share_index_.end()) return it->second;
    const NodeId id = push(std::move(node), false);
    share_index_.emplace(std::move(key), id);
    return id;
  }
  int depth = 0;
  for (NodeId in : node.ins) depth = std::max(depth, nodes_[in].depth + 1);
  node.depth = depth;
  node.offset = values_.size();
  values_.resize(values_.size() + static_cast<std::size_t>(node.size), 0.0);
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(node));
  return id;
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

NodeId Graph::input(std::span<const double> values) {
  require(!values.empty(), "input must be non-empty");
  Node n;
  n.op = Op::Input;
  n.size = static_cast<int>(values.size());
  const NodeId id = push(std::move(n), false);
  std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(nodes_[id].offset));
  return id;
}

NodeId Graph::param(ParamId p) {
  const Tensor& t = params_[p];
  Node n;
  n.op = Op::ParamVec;
  n.size = static_cast<int>(t.size());
  n.param = p;
  return push(std::move(n), true);
}

NodeId Graph::gather(ParamId table, int row) {
  const Tensor& t = params_[table];
  require(row >= 0 && row < t.rows, "gather row out of range");
  Node n;
  n.op = Op::Gather;
  n.size = t.cols;
  n.param = table;
  n.row = row;
  return push(std::move(n), true);
}

NodeId Graph::matvec(ParamId w, NodeId x) {
  const Tensor& t = params_[w];
  require(nodes_.at(x).size == t.cols, "matvec shape mismatch");
  Node n;
  n.op = Op::MatVec;
  n.size = t.rows;
  n.param = w;
  n.ins = {x};
  return push(std::move(n), true);
}

NodeId Graph::add(std::span<const NodeId> xs) {
  require(!xs.empty(), "add needs inputs");
  if (xs.size() == 1) return xs[0];
  for (NodeId x : xs) require(nodes_.at(x).size == nodes_.at(xs[0]).size, "add shape mismatch");
  Node n;
  n.op = Op::Add;
  n.size = nodes_[xs[0]].size;
  n.ins.assign(xs.begin(), xs.end());
  return push(std::move(n), true);
}

NodeId Graph::mul(NodeId a, NodeId b) {
  require(nodes_.at(a).size == nodes_.at(b).size, "mul shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.size = nodes_[a].size;
  n.ins = {a, b};
  return push(std::move(n), true);
}

namespace {

Node unary(Op op, const Node& x, NodeId id) {
  Node n;
  n.op = op;
  n.size = x.size;
  n.ins = {id};
  return n;
}

}  // namespace

NodeId Graph::sigmoid(NodeId x) { return push(unary(Op::Sigmoid, nodes_.at(x), x), true); }
NodeId Graph::tanh(NodeId x) { return push(unary(Op::Tanh, nodes_.at(x), x), true); }
NodeId Graph::one_minus(NodeId x) { return push(unary(Op::OneMinus, nodes_.at(x), x), true); }

NodeId Graph::concat(std::span<const NodeId> xs) {
  require(!xs.empty(), "concat needs inputs");
  Node n;
  n.op = Op::Concat;
  for (NodeId x : xs) n.size += nodes_.at(x).size;
  n.ins.assign(xs.begin(), xs.end());
  return push(std::move(n), true);
}

NodeId Graph::dropout(NodeId x, double rate) {
  require(rate >= 0 && rate < 1, "dropout rate must be in [0, 1)");
  if (rate == 0) return x;
  Node n = unary(Op::Dropout, nodes_.at(x), x);
  n.scalar = rate;
  n.mask = masks_.size();
  // counter-based: the mask depends only on the seed and the node index
  Rng rng(mix64(options_.dropout_seed, nodes_.size()));
  const double keep = 1.0 / (1.0 - rate);
  for (int i = 0; i < n.size; ++i) masks_.push_back(rng.uniform() < rate ? 0.0 : keep);
  return push(std::move(n), false);
}

NodeId Graph::softmax_xent(NodeId logits, int target, double weight) {
  require(target >= 0 && target < nodes_.at(logits).size, "softmax target out of range");
  Node n;
  n.op = Op::SoftmaxXent;
  n.size = 1;
  n.row = target;
  n.scalar = weight;
  n.ins = {logits};
  return push(std::move(n), true);
}

NodeId Graph::sum_all(NodeId x) {
  Node n = unary(Op::SumAll, nodes_.at(x), x);
  n.size = 1;
  return push(std::move(n), true);
}

NodeId Graph::weighted_sum(std::span<const NodeId> scalars, double scale) {
  require(!scalars.empty(), "weighted_sum needs inputs");
  for (NodeId x : scalars) require(nodes_.at(x).size == 1, "weighted_sum takes scalars");
  Node n;
  n.op = Op::WeightedSum;
  n.size = 1;
  n.scalar = scale;
  n.ins.assign(scalars.begin(), scalars.end());
  return push(std::move(n), true);
}

std::span<const double> Graph::value(NodeId id) const {
  if (id >= evaluated_) throw std::logic_error("node has not been evaluated");
  const Node& n = nodes_.at(id);
  return {values_.data() + n.offset, static_cast<std::size_t>(n.size)};
}

std::span<const double> Graph::grad(NodeId id) const {
  const Node& n = nodes_.at(id);
  if (grads_.size() < n.offset + static_cast<std::size_t>(n.size)) throw std::logic_error("no gradient computed");
  return {grads_.data() + n.offset, static_cast<std::size_t>(n.size)};
}

// ---------------------------------------------------------------------------
// Execution

const std::vector<double>& Graph::weights(ParamId w) {
  const Tensor& t = params_[w];
  if (options_.weight_dropout <= 0) return t.value;
  auto& masked = masked_weights_[w];
  if (!masked.empty()) return masked;
  auto& mask = weight_masks_[w];
  Rng rng(mix64(mix64(options_.dropout_seed, 0x5745494748ull), static_cast<std::uint64_t>(w)));
  const double keep = 1.0 / (1.0 - options_.weight_dropout);
  mask.resize(t.size());
  for (double& m : mask) m = rng.uniform() < options_.weight_dropout ? 0.0 : keep;
  // parameters are fixed for the lifetime of a graph
  masked.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) masked[i] = t.value[i] * mask[i];
  return masked;
}

namespace {

double sigmoid_of(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_finite(const double* y, int n, Op op) {
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw NumericError(std::string("non-finite value produced by ") + to_string(op));
  }
}

}  // namespace

void Graph::eval_node(NodeId id) {
  const Node& n = nodes_[id];
  double* y = values_.data() + n.offset;
  auto in = [&](std::size_t k) { return values_.data() + nodes_[n.ins[k]].offset; };
  switch (n.op) {
    case Op::Input: break;
    case Op::ParamVec: std::copy(params_[n.param].value.begin(), params_[n.param].value.end(), y); break;
    case Op::Gather: {
      const double* src = params_[n.param].row(n.row);
      std::copy(src, src + n.size, y);
      break;
    }
    case Op::MatVec: {
      const std::vector<double>& w = weights(n.param);
      const int cols = params_[n.param].cols;
      const double* x = in(0);
      for (int r = 0; r < n.size; ++r) {
        const double* wr = w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += wr[j] * x[j];
        y[r] = acc;
      }
      break;
    }
    case Op::Add: {
      std::copy(in(0), in(0) + n.size, y);
      for (std::size_t k = 1; k < n.ins.size(); ++k) {
        const double* x = in(k);
        for (int i = 0; i < n.size; ++i) y[i] += x[i];
      }
      break;
    }
    case Op::Mul: {
      const double* a = in(0);
      const double* b = in(1);
      for (int i = 0; i < n.size; ++i) y[i] = a[i] * b[i];
      break;
    }
    case Op::Sigmoid:
      for (int i = 0; i < n.size; ++i) y[i] = sigmoid_of(in(0)[i]);
      break;
    case Op::Tanh:
      for (int i = 0; i < n.size; ++i) y[i] = std::tanh(in(0)[i]);
      break;
    case Op::OneMinus:
      for (int i = 0; i < n.size; ++i) y[i] = 1.0 - in(0)[i];
      break;
    case Op::Concat: {
      double* out = y;
      for (std::size_t k = 0; k < n.ins.size(); ++k) {
        const int m = nodes_[n.ins[k]].size;
        std::copy(in(k), in(k) + m, out);
        out += m;
      }
      break;
    }
    case Op::Dropout: {
      const double* mask = masks_.data() + n.mask;
      for (int i = 0; i < n.size; ++i) y[i] = in(0)[i] * mask[i];
      break;
    }
    case Op::SoftmaxXent: {
      const double* z = in(0);
      const int m = nodes_[n.ins[0]].size;
      const double mx = *std::max_element(z, z + m);
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += std::exp(z[i] - mx);
      y[0] = n.scalar * (std::log(s) + mx - z[n.row]);
      break;
    }
    case Op::SumAll: {
      double s = 0.0;
      for (int i = 0; i < nodes_[n.ins[0]].size; ++i) s += in(0)[i];
      y[0] = s;
      break;
    }
    case Op::WeightedSum: {
      double s = 0.0;
      for (std::size_t k = 0; k < n.ins.size(); ++k) s += in(k)[0];
      y[0] = n.scalar * s;
      break;
    }
  }
  check_finite(y, n.size, n.op);
}

// Y = W X for every node of the bucket at once. Each output element sums
// over j in ascending order starting from 0.0, exactly like eval_node, so
// stacked and node-by-node results agree bitwise.
void Graph::eval_matvec_bucket(const std::vector<NodeId>& bucket) {
  const Node& first = nodes_[bucket[0]];
  const std::vector<double>& w = weights(first.param);
  const std::size_t rows = static_cast<std::size_t>(first.size);
  const std::size_t cols = static_cast<std::size_t>(params_[first.param].cols);
  const std::size_t B = bucket.size();
  std::vector<double> X(cols * B), Y(rows * B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = values_.data() + nodes_[nodes_[bucket[b]].ins[0]].offset;
    for (std::size_t j = 0; j < cols; ++j) X[j * B + b] = x[j];
  }
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    double* y0 = Y.data() + r * B;
    double* y1 = y0 + B;
    double* y2 = y1 + B;
    double* y3 = y2 + B;
    const double* w0 = w.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      const double a0 = w0[j], a1 = w0[cols + j], a2 = w0[2 * cols + j], a3 = w0[3 * cols + j];
      const double* xj = X.data() + j * B;
      for (std::size_t b = 0; b < B; ++b) {
        y0[b] += a0 * xj[b];
        y1[b] += a1 * xj[b];
        y2[b] += a2 * xj[b];
        y3[b] += a3 * xj[b];
      }
    }
  }
  for (; r < rows; ++r) {
    double* yr = Y.data() + r * B;
    for (std::size_t j = 0; j < cols; ++j) {
      const double a = w[r * cols + j];
      const double* xj = X.data() + j * B;
      for (std::size_t b = 0; b < B; ++b) yr[b] += a * xj[b];
    }
  }
  for (std::size_t b = 0; b < B; ++b) {
    const Node& n = nodes_[bucket[b]];
    double* y = values_.data() + n.offset;
    for (std::size_t i = 0; i < rows; ++i) y[i] = Y[i * B + b];
    check_finite(y, n.size, n.op);
  }
}

namespace {

struct BucketKey {
  int depth;
  Op op;
  int size;
  ParamId param;

  auto operator<=>(const BucketKey&) const = default;
};

}  // namespace

ExecStats Graph::forward(bool batched) {
  ExecStats stats;
  const std::size_t end = nodes_.size();
  if (!batched) {
    int max_depth = -1;
    for (std::size_t id = evaluated_; id < end; ++id) {
      eval_node(static_cast<NodeId>(id));
      ++stats.kernel_calls;
      ++stats.calls_per_depth[nodes_[id].depth];
      max_depth = std::max(max_depth, nodes_[id].depth);
    }
    stats.buckets = stats.kernel_calls;
    stats.depth = max_depth + 1;
    evaluated_ = end;
    return stats;
  }
  std::map<BucketKey, std::vector<NodeId>> buckets;
  for (std::size_t id = evaluated_; id < end; ++id) {
    const Node& n = nodes_[id];
    const ParamId p = n.op == Op::MatVec ? n.param : -1;
    buckets[{n.depth, n.op, n.size, p}].push_back(static_cast<NodeId>(id));
  }
  // values() must not reject inputs that are evaluated within this call
  evaluated_ = end;
  int last_depth = -1;
  for (const auto& [key, ids] : buckets) {
    if (key.op == Op::MatVec) {
      eval_matvec_bucket(ids);
    } else {
      for (NodeId id : ids) eval_node(id);
    }
    ++stats.kernel_calls;
    ++stats.buckets;
    ++stats.calls_per_depth[key.depth];
    if (key.depth != last_depth) {
      ++stats.depth;
      last_depth = key.depth;
    }
  }
  return stats;
}

void Graph::back_node(NodeId id) {
  const Node& n = nodes_[id];
  const double* g = grads_.data() + n.offset;
  const double* y = values_.data() + n.offset;
  auto gin = [&](std::size_t k) { return grads_.data() + nodes_[n.ins[k]].offset; };
  auto vin = [&](std::size_t k) { return values_.data() + nodes_[n.ins[k]].offset; };
  switch (n.op) {
    case Op::Input: break;
    case Op::ParamVec: {
      auto& pg = params_[n.param].grad;
      for (int i = 0; i < n.size; ++i) pg[static_cast<std::size_t>(i)] += g[i];
      break;
    }
    case Op::Gather: {
      Tensor& t = params_[n.param];
      double* pg = t.grad.data() + static_cast<std::size_t>(n.row) * static_cast<std::size_t>(t.cols);
      for (int i = 0; i < n.size; ++i) pg[i] += g[i];
      break;
    }
    case Op::MatVec: {
      const Tensor& t = params_[n.param];
      const std::vector<double>& w = weights(n.param);
      const std::size_t cols = static_cast<std::size_t>(t.cols);
      const double* x = vin(0);
      std::vector<double> dx(cols, 0.0);
      for (int r = 0; r < n.size; ++r) {
        const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
        const double gr = g[r];
        for (std::size_t j = 0; j < cols; ++j) dx[j] += wr[j] * gr;
      }
      double* gx = gin(0);
      for (std::size_t j = 0; j < cols; ++j) gx[j] += dx[j];
      double* pg = params_[n.param].grad.data();
      const double* mask = options_.weight_dropout > 0 ? weight_masks_.at(n.param).data() : nullptr;
      for (int r = 0; r < n.size; ++r) {
        const double gr = g[r];
        double* pr = pg + static_cast<std::size_t>(r) * cols;
        if (mask) {
          const double* mr = mask + static_cast<std::size_t>(r) * cols;
          for (std::size_t j = 0; j < cols; ++j) pr[j] += gr * x[j] * mr[j];
        } else {
          for (std::size_t j = 0; j < cols; ++j) pr[j] += gr * x[j];
        }
      }
      break;
    }
    case Op::Add:
      for (std::size_t k = 0; k < n.ins.size(); ++k) {
        double* gx = gin(k);
        for (int i = 0; i < n.size; ++i) gx[i] += g[i];
      }
      break;
    case Op::Mul: {
      const double* a = vin(0);
      const double* b = vin(1);
      double* ga = gin(0);
      for (int i = 0; i < n.size; ++i) ga[i] += g[i] * b[i];
      double* gb = gin(1);
      for (int i = 0; i < n.size; ++i) gb[i] += g[i] * a[i];
      break;
    }
    case Op::Sigmoid: {
      double* gx = gin(0);
      for (int i = 0; i < n.size; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::Tanh: {
      double* gx = gin(0);
      for (int i = 0; i < n.size; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::OneMinus: {
      double* gx = gin(0);
      for (int i = 0; i < n.size; ++i) gx[i] -= g[i];
      break;
    }
    case Op::Concat: {
      const double* src = g;
      for (std::size_t k = 0; k < n.ins.size(); ++k) {
        const int m = nodes_[n.ins[k]].size;
        double* gx = gin(k);
        for (int i = 0; i < m; ++i) gx[i] += src[i];
        src += m;
      }
      break;
    }
    case Op::Dropout: {
      const double* mask = masks_.data() + n.mask;
      double* gx = gin(0);
      for (int i = 0; i < n.size; ++i) gx[i] += g[i] * mask[i];
      break;
    }
    case Op::SoftmaxXent: {
      const double* z = vin(0);
      const int m = nodes_[n.ins[0]].size;
      const double mx = *std::max_element(z, z + m);
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += std::exp(z[i] - mx);
      double* gz = gin(0);
      const double scale = g[0] * n.scalar;
      for (int i = 0; i < m; ++i) {
        const double p = std::exp(z[i] - mx) / s;
        gz[i] += scale * (p - (i == n.row ? 1.0 : 0.0));
      }
      break;
    }
    case Op::SumAll: {
      double* gx = gin(0);
      for (int i = 0; i < nodes_[n.ins[0]].size; ++i) gx[i] += g[0];
      break;
    }
    case Op::WeightedSum:
      for (std::size_t k = 0; k < n.ins.size(); ++k) gin(k)[0] += g[0] * n.scalar;
      break;
  }
}

void Graph::back_matvec_bucket(const std::vector<NodeId>& bucket) {
  const Node& first = nodes_[bucket[0]];
  const Tensor& t = params_[first.param];
  const std::vector<double>& w = weights(first.param);
  const std::size_t rows = static_cast<std::size_t>(first.size);
  const std::size_t cols = static_cast<std::size_t>(t.cols);
  const std::size_t B = bucket.size();
  std::vector<double> G(rows * B), DX(cols * B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const double* g = grads_.data() + nodes_[bucket[b]].offset;
    for (std::size_t r = 0; r < rows; ++r) G[r * B + b] = g[r];
  }
  // dX = W^T G, summed over r in ascending order like back_node
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    const double* gr = G.data() + r * B;
    for (std::size_t j = 0; j < cols; ++j) {
      const double a = wr[j];
      double* dxj = DX.data() + j * B;
      for (std::size_t b = 0; b < B; ++b) dxj[b] += a * gr[b];
    }
  }
  for (std::size_t b = 0; b < B; ++b) {
    double* gx = grads_.data() + nodes_[nodes_[bucket[b]].ins[0]].offset;
    for (std::size_t j = 0; j < cols; ++j) gx[j] += DX[j * B + b];
  }
  // dW += G X^T
  double* pg = params_[first.param].grad.data();
  const double* mask = options_.weight_dropout > 0 ? weight_masks_.at(first.param).data() : nullptr;
  for (std::size_t b = 0; b < B; ++b) {
    const double* x = values_.data() + nodes_[nodes_[bucket[b]].ins[0]].offset;
    for (std::size_t r = 0; r < rows; ++r) {
      const double gr = G[r * B + b];
      if (gr == 0.0) continue;
      double* pr = pg + r * cols;
      if (mask) {
        const double* mr = mask + r * cols;
        for (std::size_t j = 0; j < cols; ++j) pr[j] += gr * x[j] * mr[j];
      } else {
        for (std::size_t j = 0; j < cols; ++j) pr[j] += gr * x[j];
      }
    }
  }
}

ExecStats Graph::backward(NodeId loss, bool batched) {
  if (nodes_.at(loss).size != 1) throw std::invalid_argument("loss must be a scalar node");
  forward(batched);
  grads_.assign(values_.size(), 0.0);
  grads_[nodes_[loss].offset] = 1.0;
  std::vector<char> needed(static_cast<std::size_t>(loss) + 1, 0);
  needed[loss] = 1;
  for (std::size_t id = loss + 1; id-- > 0;) {
    if (!needed[id]) continue;
    for (NodeId in : nodes_[id].ins) needed[in] = 1;
  }
  ExecStats stats;
  if (!batched) {
    for (std::size_t id = loss + 1; id-- > 0;) {
      if (!needed[id]) continue;
      back_node(static_cast<NodeId>(id));
      ++stats.kernel_calls;
    }
    stats.buckets = stats.kernel_calls;
  } else {
    std::map<BucketKey, std::vector<NodeId>> buckets;
    for (std::size_t id = 0; id <= loss; ++id) {
      if (!needed[id]) continue;
      const Node& n = nodes_[id];
      buckets[{n.depth, n.op, n.size, n.op == Op::MatVec ? n.param : -1}].push_back(static_cast<NodeId>(id));
    }
    for (auto it = buckets.rbegin(); it != buckets.rend(); ++it) {
      if (it->first.op == Op::MatVec) {
        back_matvec_bucket(it->second);
      } else {
        for (auto id = it->second.rbegin(); id != it->second.rend(); ++id) back_node(*id);
      }
      ++stats.kernel_calls;
      ++stats.buckets;
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double g : params_[static_cast<ParamId>(i)].grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in tensor '" + params_[static_cast<ParamId>(i)].name + "'");
    }
  }
  return stats;
}

GradCheck check_gradients(ParamStore& params, const std::function<NodeId(Graph&)>& build, double h,
                          std::size_t max_scalars, bool batched, double floor) {
  auto loss_value = [&] {
    Graph g(params);
    const NodeId loss = build(g);
    g.forward(batched);
    return g.scalar(loss);
  };
  params.zero_grad();
  {
    Graph g(params);
    const NodeId loss = build(g);
    g.forward(batched);
    g.backward(loss, batched);
  }
  const std::size_t total = params.scalar_count();
  const std::size_t stride = std::max<std::size_t>(1, (total + max_scalars - 1) / std::max<std::size_t>(1, max_scalars));
  GradCheck out;
  std::size_t flat = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[static_cast<ParamId>(p)];
    for (std::size_t i = 0; i < t.size(); ++i, ++flat) {
      if (flat % stride != 0 || out.checked >= max_scalars) continue;
      const double saved = t.value[i];
      t.value[i] = saved + h;
      const double up = loss_value();
      t.value[i] = saved - h;
      const double down = loss_value();
      t.value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = t.grad[i];
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      if (err > out.max_rel_error || out.checked == 0) {
        out.max_rel_error = std::max(out.max_rel_error, err);
        if (err >= out.max_rel_error) out.worst = t.name + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

}  // namespace proofgym
