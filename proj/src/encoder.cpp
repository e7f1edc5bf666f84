#include "dvsm/encoder.hpp"

#include <cmath>

#include "dvsm/error.hpp"

namespace dvsm {

std::string_view to_string(Pooling pooling) {
    switch (pooling) {
        case Pooling::Mean: return "mean";
        case Pooling::Max: return "max";
        case Pooling::Cls: return "cls";
    }
    return "mean";
}

Pooling parse_pooling(std::string_view name) {
    if (name == "mean") return Pooling::Mean;
    if (name == "max") return Pooling::Max;
    if (name == "cls") return Pooling::Cls;
    throw UsageError("unknown pooling strategy '" + std::string(name) + "' (expected mean, max or cls)");
}

EncoderConfig EncoderConfig::base() {
    EncoderConfig c;
    c.vocab_size = 30522;
    c.max_seq_len = 512;
    c.hidden_dim = 768;
    c.num_layers = 12;
    c.num_heads = 12;
    c.ffn_dim = 3072;
    return c;
}

EncoderConfig EncoderConfig::large() {
    EncoderConfig c = base();
    c.hidden_dim = 1024;
    c.num_layers = 24;
    c.num_heads = 16;
    c.ffn_dim = 4096;
    return c;
}

void EncoderConfig::validate() const {
    auto fail = [](const std::string& what) { throw UsageError("invalid encoder config: " + what); };
    if (vocab_size < 5) fail("vocab_size must cover the 4 reserved ids plus at least one token");
    if (max_seq_len < 3) fail("max_seq_len must be at least 3");
    if (hidden_dim == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0) fail("dimensions must be positive");
    if (hidden_dim % num_heads != 0) fail("hidden_dim must be divisible by num_heads");
    if (num_segments < 2) fail("num_segments must be at least 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
    if (!(init_std > 0.0)) fail("init_std must be positive");
}

std::size_t EncoderConfig::parameter_count() const {
    const std::size_t d = hidden_dim, f = ffn_dim;
    const std::size_t embeddings = (vocab_size + max_seq_len + num_segments) * d + 2 * d;
    const std::size_t attention = 4 * (d * d + d) + 2 * d;
    const std::size_t ffn = (d * f + f) + (f * d + d) + 2 * d;
    return embeddings + num_layers * (attention + ffn);
}

namespace {

Tensor normal_tensor(Shape shape, double std, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal(0.0, std);
    return t;
}

}  // namespace

Encoder::Encoder(EncoderConfig config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.hidden_dim, f = config_.ffn_dim;
    token_embedding_ = Tensor({config_.vocab_size, d});
    position_embedding_ = Tensor({config_.max_seq_len, d});
    segment_embedding_ = Tensor({config_.num_segments, d});
    embedding_norm_gamma_ = Tensor({d}, 1.0);
    embedding_norm_beta_ = Tensor({d});
    layers_.resize(config_.num_layers);
    for (auto& layer : layers_) {
        layer.query_weight = Tensor({d, d});
        layer.query_bias = Tensor({d});
        layer.key_weight = Tensor({d, d});
        layer.key_bias = Tensor({d});
        layer.value_weight = Tensor({d, d});
        layer.value_bias = Tensor({d});
        layer.output_weight = Tensor({d, d});
        layer.output_bias = Tensor({d});
        layer.attention_norm_gamma = Tensor({d}, 1.0);
        layer.attention_norm_beta = Tensor({d});
        layer.ffn_in_weight = Tensor({d, f});
        layer.ffn_in_bias = Tensor({f});
        layer.ffn_out_weight = Tensor({f, d});
        layer.ffn_out_bias = Tensor({d});
        layer.ffn_norm_gamma = Tensor({d}, 1.0);
        layer.ffn_norm_beta = Tensor({d});
    }
}

Encoder::Encoder(EncoderConfig config, Rng& init_rng) : Encoder(config) {
    const double std = config_.init_std;
    const std::size_t d = config_.hidden_dim, f = config_.ffn_dim;
    token_embedding_ = normal_tensor({config_.vocab_size, d}, std, init_rng);
    position_embedding_ = normal_tensor({config_.max_seq_len, d}, std, init_rng);
    segment_embedding_ = normal_tensor({config_.num_segments, d}, std, init_rng);
    for (auto& layer : layers_) {
        layer.query_weight = normal_tensor({d, d}, std, init_rng);
        layer.key_weight = normal_tensor({d, d}, std, init_rng);
        layer.value_weight = normal_tensor({d, d}, std, init_rng);
        layer.output_weight = normal_tensor({d, d}, std, init_rng);
        layer.ffn_in_weight = normal_tensor({d, f}, std, init_rng);
        layer.ffn_out_weight = normal_tensor({f, d}, std, init_rng);
    }
}


void Encoder::for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("embeddings.token", token_embedding_);
    fn("embeddings.position", position_embedding_);
    fn("embeddings.segment", segment_embedding_);
    fn("embeddings.norm_gamma", embedding_norm_gamma_);
    fn("embeddings.norm_beta", embedding_norm_beta_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        EncoderLayer& l = layers_[i];
        fn(p + "query_weight", l.query_weight);
        fn(p + "query_bias", l.query_bias);
        fn(p + "key_weight", l.key_weight);
        fn(p + "key_bias", l.key_bias);
        fn(p + "value_weight", l.value_weight);
        fn(p + "value_bias", l.value_bias);
        fn(p + "output_weight", l.output_weight);
        fn(p + "output_bias", l.output_bias);
        fn(p + "attention_norm_gamma", l.attention_norm_gamma);
        fn(p + "attention_norm_beta", l.attention_norm_beta);
        fn(p + "ffn_in_weight", l.ffn_in_weight);
        fn(p + "ffn_in_bias", l.ffn_in_bias);
        fn(p + "ffn_out_weight", l.ffn_out_weight);
        fn(p + "ffn_out_bias", l.ffn_out_bias);
        fn(p + "ffn_norm_gamma", l.ffn_norm_gamma);
        fn(p + "ffn_norm_beta", l.ffn_norm_beta);
    }
}

void Encoder::for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<Encoder*>(this)->for_each_parameter(
        [&fn](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
}

void validate_input(const EncoderConfig& config, const TokenInput& input) {
    const std::size_t len = input.token_ids.size();
    if (len == 0) throw DataError("encoder input is empty");
    if (input.segment_ids.size() != len || input.attention_mask.size() != len) {
        throw DataError("token, segment and mask sequences differ in length");
    }
    if (len > config.max_seq_len) {
        throw DataError("sequence of length " + std::to_string(len) + " exceeds max_seq_len " +
                        std::to_string(config.max_seq_len));
    }
    for (auto id : input.token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config.vocab_size));
        }
    }
    for (auto id : input.segment_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config.num_segments) {
            throw DataError("segment id " + std::to_string(id) + " out of range");
        }
    }
    bool any = false;
    for (auto m : input.attention_mask) any = any || m != 0;
    if (!any) throw DataError("attention mask selects no positions");
}

template <typename Self>
Var Encoder::forward(Self& self, Tape& tape, const TokenInput& input, bool training, Rng* rng) {
    const EncoderConfig& cfg = self.config_;
    validate_input(cfg, input);
    if (training && cfg.dropout_rate > 0.0 && rng == nullptr) throw UsageError("training mode needs an rng");
    const bool drop = training && cfg.dropout_rate > 0.0;
    auto maybe_dropout = [&](Var x) { return drop ? dropout(x, cfg.dropout_rate, *rng) : x; };

    const std::size_t len = input.size();
    const std::size_t d = cfg.hidden_dim;
    const std::size_t heads = cfg.num_heads;
    const std::size_t head_dim = d / heads;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    std::vector<std::int64_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = static_cast<std::int64_t>(i);

    Var x = add(add(embedding(tape.param(self.token_embedding_), input.token_ids),
                    embedding(tape.param(self.position_embedding_), positions)),
                embedding(tape.param(self.segment_embedding_), input.segment_ids));
    x = layer_norm(x, tape.param(self.embedding_norm_gamma_), tape.param(self.embedding_norm_beta_),
                   cfg.layer_norm_eps);
    x = maybe_dropout(x);

    for (auto& layer : self.layers_) {
        Var q = add(matmul(x, tape.param(layer.query_weight)), tape.param(layer.query_bias));
        Var k = add(matmul(x, tape.param(layer.key_weight)), tape.param(layer.key_bias));
        Var v = add(matmul(x, tape.param(layer.value_weight)), tape.param(layer.value_bias));
        std::vector<Var> head_outputs;
        head_outputs.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            Var qh = narrow(q, 1, h * head_dim, head_dim);
            Var kh = narrow(k, 1, h * head_dim, head_dim);
            Var vh = narrow(v, 1, h * head_dim, head_dim);
            Var scores = scale(matmul(qh, transpose(kh)), score_scale);
            Var weights = maybe_dropout(masked_softmax(scores, input.attention_mask));
            head_outputs.push_back(matmul(weights, vh));
        }
        Var attended = heads == 1 ? head_outputs[0] : concat(head_outputs, 1);
        attended = add(matmul(attended, tape.param(layer.output_weight)), tape.param(layer.output_bias));
        x = layer_norm(add(x, attended), tape.param(layer.attention_norm_gamma), tape.param(layer.attention_norm_beta),
                       cfg.layer_norm_eps);

        Var hidden = gelu(add(matmul(x, tape.param(layer.ffn_in_weight)), tape.param(layer.ffn_in_bias)));
        Var projected = add(matmul(hidden, tape.param(layer.ffn_out_weight)), tape.param(layer.ffn_out_bias));
        projected = maybe_dropout(projected);
        x = layer_norm(add(x, projected), tape.param(layer.ffn_norm_gamma), tape.param(layer.ffn_norm_beta),
                       cfg.layer_norm_eps);
    }
    return x;
}

Var Encoder::encode(Tape& tape, const TokenInput& input, bool training, Rng* rng) {
    return forward(*this, tape, input, training, rng);
}

Var Encoder::encode(Tape& tape, const TokenInput& input) const {
    return forward(*this, tape, input, false, nullptr);
}

Var pool(Var hidden, std::span<const std::uint8_t> mask, Pooling strategy) {
    if (hidden.shape().size() != 2) throw DimensionError("pool expects [len x d] hidden states");
    const std::size_t d = hidden.shape()[1];
    bool any = false;
    for (auto m : mask) any = any || m != 0;
    if (!any) throw UsageError("pool: mask selects no positions");
    switch (strategy) {
        case Pooling::Mean: return masked_mean(hidden, 0, mask);
        case Pooling::Max: return masked_max(hidden, 0, mask);
        case Pooling::Cls: return reshape(narrow(hidden, 0, 0, 1), {d});
    }
    throw UsageError("unknown pooling strategy");
}

}  // namespace dvsm
