#include "snojoe/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "snojoe/random.hpp"
#include "snojoe/scalar.hpp"

namespace snojoe {

namespace {

using Json = nlohmann::json;

// Stream indices under ModelConfig::seed.
constexpr std::uint64_t kWeightStream = 0;
constexpr std::uint64_t kSpectralStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

struct Cache {
    Eigen::MatrixXd X;                // input_dim x n
    std::vector<Eigen::MatrixXd> H;   // H[0] projected input, H[l] after block l
    std::vector<Eigen::MatrixXd> A;   // pre-activations of each block
    std::vector<Eigen::MatrixXd> Weff;
    Eigen::MatrixXd F;                // K x n
};

void check_input(const ResidualClassifier& model, Eigen::Index cols) {
    if (cols != model.config.input_dim)
        throw std::invalid_argument("input dimension mismatch: model expects " + std::to_string(model.config.input_dim) +
                                    ", got " + std::to_string(cols));
}

Cache run_forward(const ResidualClassifier& model, Eigen::MatrixXd X) {
    Cache c;
    c.X = std::move(X);
    const int layers = model.config.num_layers();
    c.Weff.reserve(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) c.Weff.push_back(model.effective_weight(l));

    c.H.reserve(static_cast<std::size_t>(layers));
    c.H.push_back((c.Weff[0] * c.X).colwise() + model.params.input_proj.b);
    for (int k = 0; k < model.config.num_blocks; ++k) {
        const Layer& blk = model.params.blocks[static_cast<std::size_t>(k)];
        c.A.push_back((c.Weff[static_cast<std::size_t>(k + 1)] * c.H.back()).colwise() + blk.b);
        c.H.push_back(c.H.back() + c.A.back().cwiseMax(0.0));
    }
    c.F = model.params.heads * c.H.back();
    return c;
}

// Chain rule through W_eff = W / (u^T W v) with (u, v) fixed.
Eigen::MatrixXd through_normalization(const ResidualClassifier& model, int layer, const Eigen::MatrixXd& dWeff,
                                      const Eigen::MatrixXd& Weff) {
    if (!model.is_normalized(layer)) return dWeff;
    const auto& s = model.sn_state[static_cast<std::size_t>(layer)];
    const double sigma = model.layer_sigma(layer);
    const double inner = (dWeff.array() * Weff.array()).sum();
    return (dWeff - inner * s.u * s.v.transpose()) / sigma;
}

// Backpropagates dF (K x n) through the cached forward pass. Returns dX.
Eigen::MatrixXd run_backward(const ResidualClassifier& model, const Cache& c, const Eigen::MatrixXd& dF,
                             Parameters* grad) {
    if (grad) grad->heads = dF * c.H.back().transpose();
    Eigen::MatrixXd dH = model.params.heads.transpose() * dF;
    for (int k = model.config.num_blocks - 1; k >= 0; --k) {
        const auto ks = static_cast<std::size_t>(k);
        const Eigen::MatrixXd dA = dH.cwiseProduct((c.A[ks].array() > 0.0).cast<double>().matrix());
        if (grad) {
            grad->blocks[ks].W = through_normalization(model, k + 1, dA * c.H[ks].transpose(), c.Weff[ks + 1]);
            grad->blocks[ks].b = dA.rowwise().sum();
        }
        dH += c.Weff[ks + 1].transpose() * dA;
    }
    if (grad) {
        grad->input_proj.W = through_normalization(model, 0, dH * c.X.transpose(), c.Weff[0]);
        grad->input_proj.b = dH.rowwise().sum();
    }
    return c.Weff[0].transpose() * dH;
}

std::string hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double unhex(const Json& j) {
    if (!j.is_string()) throw std::runtime_error("expected hexadecimal float string");
    const std::string s = j.get<std::string>();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw std::runtime_error("bad floating-point value '" + s + "'");
    return v;
}

Json vector_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(hex(v[i]));
    return a;
}

Json matrix_json(const Eigen::MatrixXd& m) {
    Json data = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(hex(m(r, c)));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::VectorXd vector_from(const Json& j, Eigen::Index expected, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expected)
        throw std::runtime_error(std::string(what) + ": expected " + std::to_string(expected) + " values");
    Eigen::VectorXd v(expected);
    for (Eigen::Index i = 0; i < expected; ++i) v[i] = unhex(j[static_cast<std::size_t>(i)]);
    return v;
}

Eigen::MatrixXd matrix_from(const Json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols)
        throw std::runtime_error(std::string(what) + ": shape does not match config");
    const Json& data = j.at("data");
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw std::runtime_error(std::string(what) + ": wrong number of entries");
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = unhex(data[k++]);
    return m;
}

Json config_json(const ModelConfig& c) {
    return {{"input_dim", c.input_dim},   {"hidden_dim", c.hidden_dim},       {"num_blocks", c.num_blocks},
            {"sn_layers", c.sn_layers},   {"num_labels", c.num_labels},       {"learning_rate", hex(c.learning_rate)},
            {"epochs", c.epochs},         {"batch_size", c.batch_size},       {"seed", c.seed}};
}

ModelConfig config_from(const Json& j) {
    ModelConfig c;
    c.input_dim = j.at("input_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_blocks = j.at("num_blocks").get<int>();
    c.sn_layers = j.at("sn_layers").get<int>();
    c.num_labels = j.at("num_labels").get<int>();
    c.learning_rate = unhex(j.at("learning_rate"));
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

}  // namespace

void ModelConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || num_blocks < 1 || num_labels < 1)
        throw std::invalid_argument("model dimensions must be positive");
    if (sn_layers < 0 || sn_layers > num_blocks + 1)
        throw std::invalid_argument("sn_layers must lie in [0, num_blocks + 1]");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning_rate must be positive");
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch_size must be positive");
}

Parameters Parameters::zeros_like() const {
    Parameters z;
    z.input_proj = {Eigen::MatrixXd::Zero(input_proj.W.rows(), input_proj.W.cols()),
                    Eigen::VectorXd::Zero(input_proj.b.size())};
    for (const auto& blk : blocks)
        z.blocks.push_back({Eigen::MatrixXd::Zero(blk.W.rows(), blk.W.cols()), Eigen::VectorXd::Zero(blk.b.size())});
    z.heads = Eigen::MatrixXd::Zero(heads.rows(), heads.cols());
    return z;
}

std::vector<Eigen::Map<Eigen::VectorXd>> Parameters::tensors() {
    std::vector<Eigen::Map<Eigen::VectorXd>> out;
    auto add = [&out](auto& t) { out.emplace_back(t.data(), t.size()); };
    add(input_proj.W);
    add(input_proj.b);
    for (auto& blk : blocks) {
        add(blk.W);
        add(blk.b);
    }
    add(heads);
    return out;
}

std::vector<std::string> Parameters::tensor_names() const {
    std::vector<std::string> names{"input_proj.W", "input_proj.b"};
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        names.push_back("blocks[" + std::to_string(k) + "].W");
        names.push_back("blocks[" + std::to_string(k) + "].b");
    }
    names.emplace_back("heads");
    return names;
}

double ResidualClassifier::layer_sigma(int layer) const {
    const auto& s = sn_state.at(static_cast<std::size_t>(layer));
    return s.u.dot(params.layer(layer).W * s.v);
}

Eigen::MatrixXd ResidualClassifier::effective_weight(int layer) const {
    const Eigen::MatrixXd& W = params.layer(layer).W;
    if (!is_normalized(layer)) return W;
    const double sigma = layer_sigma(layer);
    if (!(sigma >= kDegenerateSigma)) throw std::domain_error("degenerate weight matrix in layer " + std::to_string(layer + 1));
    return normalize_spectral(W, sigma);
}

ResidualClassifier init_model(const ModelConfig& config) {
    config.validate();
    ResidualClassifier m;
    m.config = config;
    SplitMix64 rng(derive_seed(config.seed, kWeightStream));
    const int d = config.input_dim;
    const int h = config.hidden_dim;
    m.params.input_proj = {rng.normal_matrix(h, d, 1.0 / std::sqrt(double(d))), Eigen::VectorXd::Zero(h)};
    for (int k = 0; k < config.num_blocks; ++k)
        m.params.blocks.push_back({rng.normal_matrix(h, h, 1.0 / std::sqrt(double(h))), Eigen::VectorXd::Zero(h)});
    m.params.heads = rng.normal_matrix(config.num_labels, h, 1.0 / std::sqrt(double(h)));

    SplitMix64 sn_rng(derive_seed(config.seed, kSpectralStream));
    for (int l = 0; l < config.sn_layers; ++l) {
        const auto& W = m.params.layer(l).W;
        m.sn_state.push_back(power_iteration(W, PowerIterState<double>::random(W.rows(), W.cols(), sn_rng), 1,
                                             std::numeric_limits<double>::min()));
    }
    return m;
}

ForwardResult forward(const ResidualClassifier& model, const Eigen::VectorXd& x) {
    check_input(model, x.size());
    const Cache c = run_forward(model, x);
    return {c.H.back().col(0), c.F.col(0)};
}

Eigen::MatrixXd logits_batch(const ResidualClassifier& model, const Eigen::MatrixXd& X) {
    check_input(model, X.cols());
    return run_forward(model, X.transpose()).F.transpose();
}

Eigen::MatrixXd penultimate_batch(const ResidualClassifier& model, const Eigen::MatrixXd& X) {
    check_input(model, X.cols());
    return run_forward(model, X.transpose()).H.back().transpose();
}

Eigen::MatrixXd block_branch(const ResidualClassifier& model, int block, const Eigen::MatrixXd& H) {
    const Eigen::MatrixXd W = model.effective_weight(block + 1);
    return ((W * H).colwise() + model.params.blocks.at(static_cast<std::size_t>(block)).b).cwiseMax(0.0);
}

Eigen::VectorXd predict_proba(const Eigen::VectorXd& logits) { return logits.unaryExpr([](double f) { return sigmoid(f); }); }

double loss_and_gradients(const ResidualClassifier& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                          Parameters* grad) {
    check_input(model, X.cols());
    if (Y.rows() != X.rows() || Y.cols() != model.config.num_labels)
        throw std::invalid_argument("label matrix shape does not match inputs");
    if (X.rows() == 0) throw std::invalid_argument("empty batch");
    const Cache c = run_forward(model, X.transpose());
    const Eigen::MatrixXd Yt = Y.transpose();
    const double n = static_cast<double>(X.rows());
    double loss = 0.0;
    Eigen::MatrixXd dF(c.F.rows(), c.F.cols());
    for (Eigen::Index j = 0; j < c.F.cols(); ++j)
        for (Eigen::Index i = 0; i < c.F.rows(); ++i) {
            const double f = c.F(i, j);
            loss += softplus(f) - Yt(i, j) * f;
            dF(i, j) = (sigmoid(f) - Yt(i, j)) / n;
        }
    if (grad) {
        *grad = model.params.zeros_like();
        run_backward(model, c, dF, grad);
    }
    return loss / n;
}

Eigen::VectorXd input_vjp(const ResidualClassifier& model, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) {
    check_input(model, x.size());
    if (upstream.size() != model.config.num_labels) throw std::invalid_argument("upstream gradient has wrong length");
    const Cache c = run_forward(model, x);
    return run_backward(model, c, upstream, nullptr).col(0);
}

TrainResult train(const MultiLabelDataset& data, const ModelConfig& config, const AdamOptions& adam) {
    config.validate();
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.input_dim() != config.input_dim || data.num_labels() != config.num_labels)
        throw std::invalid_argument("train: dataset shape does not match model config");

    TrainResult result;
    result.model = init_model(config);
    ResidualClassifier& model = result.model;
    Parameters m1 = model.params.zeros_like();
    Parameters m2 = model.params.zeros_like();
    Parameters grad;

    const Eigen::Index n = data.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    SplitMix64 shuffle_rng(derive_seed(config.seed, kShuffleStream));

    long long t = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index count = std::min<Eigen::Index>(config.batch_size, n - start);
            Eigen::MatrixXd X(count, data.input_dim());
            Eigen::MatrixXd Y(count, data.num_labels());
            for (Eigen::Index r = 0; r < count; ++r) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + r)];
                X.row(r) = data.features.row(src);
                Y.row(r) = data.labels.row(src);
            }
            for (int l = 0; l < config.sn_layers; ++l) {
                auto& state = model.sn_state[static_cast<std::size_t>(l)];
                state = power_iteration(model.params.layer(l).W, std::move(state), 1, std::numeric_limits<double>::min());
            }
            const double loss = loss_and_gradients(model, X, Y, &grad);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                         ", batch starting at sample " + std::to_string(start));
            epoch_loss += loss * static_cast<double>(count);

            ++t;
            const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(t));
            auto p = model.params.tensors();
            auto g = grad.tensors();
            auto a = m1.tensors();
            auto b = m2.tensors();
            for (std::size_t k = 0; k < p.size(); ++k) {
                a[k] = adam.beta1 * a[k] + (1.0 - adam.beta1) * g[k];
                b[k] = adam.beta2 * b[k] + (1.0 - adam.beta2) * g[k].cwiseAbs2();
                p[k].array() -= config.learning_rate * (a[k].array() / c1) /
                                ((b[k].array() / c2).sqrt() + adam.epsilon);
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }
    finalize(model);
    return result;
}

void finalize(ResidualClassifier& model) {
    for (int l = 0; l < model.config.sn_layers; ++l) {
        auto& state = model.sn_state[static_cast<std::size_t>(l)];
        state = power_iteration(model.params.layer(l).W, std::move(state), kFinalizeSteps, kFinalizeTol);
    }
}

std::string serialize_model(const ResidualClassifier& model) {
    Json j;
    j["format"] = "snojoe-model";
    j["format_version"] = kModelFormatVersion;
    j["config"] = config_json(model.config);
    j["input_proj"] = {{"W", matrix_json(model.params.input_proj.W)}, {"b", vector_json(model.params.input_proj.b)}};
    Json blocks = Json::array();
    for (const auto& blk : model.params.blocks) blocks.push_back({{"W", matrix_json(blk.W)}, {"b", vector_json(blk.b)}});
    j["blocks"] = std::move(blocks);
    j["heads"] = matrix_json(model.params.heads);
    Json sn = Json::array();
    for (std::size_t l = 0; l < model.sn_state.size(); ++l) {
        const auto& s = model.sn_state[l];
        sn.push_back({{"layer", l + 1}, {"u", vector_json(s.u)}, {"v", vector_json(s.v)},
                      {"sigma_estimate", hex(s.sigma_estimate)}});
    }
    j["sn_state"] = std::move(sn);
    return j.dump(1) + "\n";
}

ResidualClassifier deserialize_model(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error(std::string("corrupt or truncated model file: ") + e.what());
    }
    int version = 0;
    try {
        if (j.at("format").get<std::string>() != "snojoe-model") throw std::runtime_error("not a snojoe model file");
        version = j.at("format_version").get<int>();
    } catch (const Json::exception& e) {
        throw std::runtime_error(std::string("malformed model file: ") + e.what());
    }
    if (version != kModelFormatVersion)
        throw std::runtime_error("unsupported model format_version " + std::to_string(version) + " (this build reads " +
                                 std::to_string(kModelFormatVersion) + ")");
    try {
        ResidualClassifier m;
        m.config = config_from(j.at("config"));
        const ModelConfig& c = m.config;
        m.params.input_proj.W = matrix_from(j.at("input_proj").at("W"), c.hidden_dim, c.input_dim, "input_proj.W");
        m.params.input_proj.b = vector_from(j.at("input_proj").at("b"), c.hidden_dim, "input_proj.b");
        const Json& blocks = j.at("blocks");
        if (!blocks.is_array() || static_cast<int>(blocks.size()) != c.num_blocks)
            throw std::runtime_error("block count does not match config");
        for (const Json& blk : blocks)
            m.params.blocks.push_back({matrix_from(blk.at("W"), c.hidden_dim, c.hidden_dim, "block W"),
                                       vector_from(blk.at("b"), c.hidden_dim, "block b")});
        m.params.heads = matrix_from(j.at("heads"), c.num_labels, c.hidden_dim, "heads");
        const Json& sn = j.at("sn_state");
        if (!sn.is_array() || static_cast<int>(sn.size()) != c.sn_layers)
            throw std::runtime_error("sn_state count does not match sn_layers");
        for (int l = 0; l < c.sn_layers; ++l) {
            const Json& s = sn[static_cast<std::size_t>(l)];
            const auto& W = m.params.layer(l).W;
            PowerIterState<double> state;
            state.u = vector_from(s.at("u"), W.rows(), "sn_state.u");
            state.v = vector_from(s.at("v"), W.cols(), "sn_state.v");
            state.sigma_estimate = unhex(s.at("sigma_estimate"));
            m.sn_state.push_back(std::move(state));
        }
        return m;
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const ResidualClassifier& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_model(model);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ResidualClassifier load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return deserialize_model(ss.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace snojoe
