#include "haf/model.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "haf/io.hpp"

namespace haf {

const char* activation_name(Activation act) {
  return act == Activation::Tanh ? "tanh" : "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw Error(ErrorCode::InvalidConfig, "unknown activation '" + name + "'");
}

namespace {

Matrix apply_activation(Activation act, Matrix pre) {
  if (act == Activation::Tanh) pre = pre.array().tanh().matrix();
  return pre;
}

// Derivative expressed through the layer output (tanh' = 1 - y^2).
Matrix activation_grad_from_output(Activation act, const Matrix& out) {
  if (act == Activation::Tanh) return (1.0 - out.array().square()).matrix();
  return Matrix::Ones(out.rows(), out.cols());
}

}  // namespace

ClassifierStack ClassifierStack::random(const TaxonomyTree& tree, int input_dim,
                                        const std::vector<int>& mlp_dims,
                                        Rng& rng) {
  if (input_dim <= 0) throw Error(ErrorCode::InvalidConfig, "input_dim must be positive");
  ClassifierStack stack;
  stack.input_dim = input_dim;
  int in = input_dim;
  for (int width : mlp_dims) {
    if (width <= 0) throw Error(ErrorCode::InvalidConfig, "mlp width must be positive");
    MlpLayer layer;
    layer.weight.resize(width, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = scale * rng.gaussian();
    layer.bias = Vector::Zero(width);
    layer.activation = Activation::Tanh;
    stack.mlp.push_back(std::move(layer));
    in = width;
  }
  stack.feature_dim = in;
  for (int level = 1; level <= tree.num_levels(); ++level) {
    Matrix head(tree.classes_at(level), in);
    for (Eigen::Index r = 0; r < head.rows(); ++r)
      for (Eigen::Index c = 0; c < head.cols(); ++c)
        head(r, c) = rng.gaussian();
    row_l2_normalize(head);
    stack.heads.push_back(std::move(head));
  }
  return stack;
}

int ClassifierStack::param_count() const {
  int n = 0;
  for (const auto& layer : mlp)
    n += static_cast<int>(layer.weight.size() + layer.bias.size());
  for (const auto& head : heads) n += static_cast<int>(head.size());
  return n;
}

Vector ClassifierStack::to_vector() const {
  Vector packed(param_count());
  Eigen::Index pos = 0;
  auto put = [&](const double* data, Eigen::Index n) {
    packed.segment(pos, n) = Eigen::Map<const Vector>(data, n);
    pos += n;
  };
  for (const auto& layer : mlp) {
    put(layer.weight.data(), layer.weight.size());
    put(layer.bias.data(), layer.bias.size());
  }
  for (const auto& head : heads) put(head.data(), head.size());
  return packed;
}

void ClassifierStack::from_vector(const Vector& packed) {
  if (packed.size() != param_count()) {
    throw Error(ErrorCode::ShapeMismatch, "packed parameter size mismatch");
  }
  Eigen::Index pos = 0;
  auto take = [&](double* data, Eigen::Index n) {
    Eigen::Map<Vector>(data, n) = packed.segment(pos, n);
    pos += n;
  };
  for (auto& layer : mlp) {
    take(layer.weight.data(), layer.weight.size());
    take(layer.bias.data(), layer.bias.size());
  }
  for (auto& head : heads) take(head.data(), head.size());
}

void ClassifierStack::validate_against(const TaxonomyTree& tree) const {
  if (num_levels() != tree.num_levels()) {
    throw Error(ErrorCode::ShapeMismatch,
                "checkpoint has " + std::to_string(num_levels()) +
                    " levels, taxonomy has " + std::to_string(tree.num_levels()));
  }
  for (int level = 1; level <= tree.num_levels(); ++level) {
    if (heads[level - 1].rows() != tree.classes_at(level)) {
      throw Error(ErrorCode::ShapeMismatch,
                  "head " + std::to_string(level) + " rows " +
                      std::to_string(heads[level - 1].rows()) + " vs " +
                      std::to_string(tree.classes_at(level)) + " classes");
    }
  }
}

LevelPredictions ForwardTrace::sample(int i) const {
  LevelPredictions preds;
  for (std::size_t h = 0; h < logits.size(); ++h) {
    preds.logits.push_back(logits[h].row(i).transpose());
    preds.probs.push_back(probs[h].row(i).transpose());
  }
  return preds;
}

ForwardTrace forward(const ClassifierStack& stack, const Matrix& batch) {
  if (batch.cols() != stack.input_dim) {
    throw Error(ErrorCode::ShapeMismatch,
                "input has " + std::to_string(batch.cols()) + " features, stack expects " +
                    std::to_string(stack.input_dim));
  }
  ForwardTrace trace;
  trace.input = batch;
  Matrix current = batch;
  for (const auto& layer : stack.mlp) {
    Matrix pre = current * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    current = apply_activation(layer.activation, std::move(pre));
    trace.layer_out.push_back(current);
  }
  trace.features = current;
  for (const auto& head : stack.heads) {
    Matrix logits = trace.features * head.transpose();
    Matrix probs(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      probs.row(i) = softmax(logits.row(i).transpose()).transpose();
    }
    trace.logits.push_back(std::move(logits));
    trace.probs.push_back(std::move(probs));
  }
  return trace;
}

std::pair<Vector, LevelPredictions> forward_sample(const ClassifierStack& stack,
                                                   const Vector& x) {
  ForwardTrace trace = forward(stack, x.transpose());
  return {trace.features.row(0).transpose(), trace.sample(0)};
}

ParamGrads ParamGrads::zeros_like(const ClassifierStack& stack) {
  ParamGrads grads;
  for (const auto& layer : stack.mlp) {
    grads.mlp_weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    grads.mlp_bias.push_back(Vector::Zero(layer.bias.size()));
  }
  for (const auto& head : stack.heads) {
    grads.heads.push_back(Matrix::Zero(head.rows(), head.cols()));
  }
  return grads;
}

Vector ParamGrads::to_vector() const {
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < mlp_weight.size(); ++i)
    total += mlp_weight[i].size() + mlp_bias[i].size();
  for (const auto& head : heads) total += head.size();
  Vector packed(total);
  Eigen::Index pos = 0;
  auto put = [&](const double* data, Eigen::Index n) {
    packed.segment(pos, n) = Eigen::Map<const Vector>(data, n);
    pos += n;
  };
  for (std::size_t i = 0; i < mlp_weight.size(); ++i) {
    put(mlp_weight[i].data(), mlp_weight[i].size());
    put(mlp_bias[i].data(), mlp_bias[i].size());
  }
  for (const auto& head : heads) put(head.data(), head.size());
  return packed;
}

ParamGrads backward(const ClassifierStack& stack, const ForwardTrace& trace,
                    const std::vector<Matrix>& dlogits) {
  if (dlogits.size() != stack.heads.size()) {
    throw Error(ErrorCode::ShapeMismatch, "dlogits level count mismatch");
  }
  ParamGrads grads = ParamGrads::zeros_like(stack);
  Matrix dfeatures = Matrix::Zero(trace.features.rows(), trace.features.cols());
  for (std::size_t h = 0; h < stack.heads.size(); ++h) {
    if (dlogits[h].rows() != trace.features.rows() ||
        dlogits[h].cols() != stack.heads[h].rows()) {
      throw Error(ErrorCode::ShapeMismatch,
                  "dlogits shape mismatch at level " + std::to_string(h + 1));
    }
    grads.heads[h] = dlogits[h].transpose() * trace.features;
    dfeatures += dlogits[h] * stack.heads[h];
  }
  Matrix dout = std::move(dfeatures);
  for (int l = static_cast<int>(stack.mlp.size()) - 1; l >= 0; --l) {
    const Matrix& out = trace.layer_out[l];
    const Matrix& in = (l == 0) ? trace.input : trace.layer_out[l - 1];
    Matrix dpre =
        (dout.array() *
         activation_grad_from_output(stack.mlp[l].activation, out).array())
            .matrix();
    grads.mlp_weight[l] = dpre.transpose() * in;
    grads.mlp_bias[l] = dpre.colwise().sum().transpose();
    dout = dpre * stack.mlp[l].weight;
  }
  return grads;
}

void project_unit_norm(ClassifierStack& stack) {
  for (auto& head : stack.heads) row_l2_normalize(head);
}

double max_head_norm_deviation(const ClassifierStack& stack) {
  double worst = 0.0;
  for (const auto& head : stack.heads) {
    for (Eigen::Index r = 0; r < head.rows(); ++r) {
      worst = std::max(worst, std::abs(head.row(r).norm() - 1.0));
    }
  }
  return worst;
}

namespace {

void append_row_major(std::string& out, const Matrix& m) {
  out += '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (r != 0 || c != 0) out += ',';
      out += format_double(m(r, c));
    }
  }
  out += ']';
}

Matrix matrix_from_json(const nlohmann::json& values, int rows, int cols,
                        const std::string& what) {
  if (static_cast<int>(values.size()) != rows * cols) {
    throw Error(ErrorCode::ShapeMismatch, what + " has wrong element count");
  }
  Matrix m(rows, cols);
  int k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[k++].get<double>();
  return m;
}

}  // namespace

std::string save_checkpoint(const ClassifierStack& stack) {
  std::string out = "{\n";
  out += "  \"format_version\": 1,\n";
  out += "  \"input_dim\": " + std::to_string(stack.input_dim) + ",\n";
  out += "  \"feature_dim\": " + std::to_string(stack.feature_dim) + ",\n";
  out += "  \"levels\": [";
  for (std::size_t h = 0; h < stack.heads.size(); ++h) {
    if (h) out += ',';
    out += std::to_string(stack.heads[h].rows());
  }
  out += "],\n  \"mlp\": [";
  for (std::size_t l = 0; l < stack.mlp.size(); ++l) {
    const auto& layer = stack.mlp[l];
    if (l) out += ',';
    out += "\n    {\"rows\": " + std::to_string(layer.weight.rows()) +
           ", \"cols\": " + std::to_string(layer.weight.cols()) +
           ", \"activation\": \"" + activation_name(layer.activation) +
           "\", \"weights\": ";
    append_row_major(out, layer.weight);
    out += ", \"bias\": ";
    append_row_major(out, layer.bias.transpose());
    out += '}';
  }
  out += "\n  ],\n  \"heads\": [";
  for (std::size_t h = 0; h < stack.heads.size(); ++h) {
    const auto& head = stack.heads[h];
    if (h) out += ',';
    out += "\n    {\"rows\": " + std::to_string(head.rows()) +
           ", \"cols\": " + std::to_string(head.cols()) + ", \"weights\": ";
    append_row_major(out, head);
    out += '}';
  }
  out += "\n  ]\n}\n";
  return out;
}

ClassifierStack load_checkpoint(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("checkpoint parse: ") + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != 1) {
      throw Error(ErrorCode::InvalidConfig, "unsupported checkpoint format_version");
    }
    ClassifierStack stack;
    stack.input_dim = doc.at("input_dim").get<int>();
    stack.feature_dim = doc.at("feature_dim").get<int>();
    for (const auto& entry : doc.at("mlp")) {
      MlpLayer layer;
      const int rows = entry.at("rows").get<int>();
      const int cols = entry.at("cols").get<int>();
      layer.weight = matrix_from_json(entry.at("weights"), rows, cols, "mlp weights");
      layer.bias =
          matrix_from_json(entry.at("bias"), 1, rows, "mlp bias").row(0).transpose();
      layer.activation = activation_from_name(entry.at("activation").get<std::string>());
      stack.mlp.push_back(std::move(layer));
    }
    const auto& levels = doc.at("levels");
    const auto& heads = doc.at("heads");
    if (levels.size() != heads.size()) {
      throw Error(ErrorCode::ShapeMismatch, "levels/heads count mismatch");
    }
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const int rows = heads[h].at("rows").get<int>();
      const int cols = heads[h].at("cols").get<int>();
      if (rows != levels[h].get<int>() || cols != stack.feature_dim) {
        throw Error(ErrorCode::ShapeMismatch,
                    "head " + std::to_string(h + 1) + " shape inconsistent");
      }
      stack.heads.push_back(
          matrix_from_json(heads[h].at("weights"), rows, cols, "head weights"));
    }
    return stack;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("checkpoint fields: ") + e.what());
  }
}

}  // namespace haf
