#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvsm/autodiff.hpp"

namespace dvsm {

enum class Pooling { Mean, Max, Cls };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view name);

struct EncoderConfig {
    std::size_t vocab_size = 512;
    std::size_t max_seq_len = 64;
    std::size_t hidden_dim = 64;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    std::size_t num_segments = 2;
    double dropout_rate = 0.1;
    double layer_norm_eps = 1e-12;
    double init_std = 0.02;

    /// 12 layers, 12 heads, hidden 768 (BERT-base shape).
    static EncoderConfig base();
    /// 24 layers, 16 heads, hidden 1024 (BERT-large shape).
    static EncoderConfig large();

    void validate() const;
    std::size_t parameter_count() const;

    bool operator==(const EncoderConfig&) const = default;
};

/// Packed model input. All three sequences have the same length.
struct TokenInput {
    std::vector<std::int64_t> token_ids;
    std::vector<std::int64_t> segment_ids;
    std::vector<std::uint8_t> attention_mask;

    std::size_t size() const noexcept { return token_ids.size(); }
};

struct EncoderLayer {
    Tensor query_weight, query_bias;
    Tensor key_weight, key_bias;
    Tensor value_weight, value_bias;
    Tensor output_weight, output_bias;
    Tensor attention_norm_gamma, attention_norm_beta;
    Tensor ffn_in_weight, ffn_in_bias;
    Tensor ffn_out_weight, ffn_out_bias;
    Tensor ffn_norm_gamma, ffn_norm_beta;
};

/// Post-norm transformer encoder with learned absolute positions and segment embeddings.
class Encoder {
public:
    /// Weights drawn from normal(0, init_std); biases 0; norm gains 1.
    Encoder(EncoderConfig config, Rng& init_rng);
    /// All-zero parameters of the right shapes, to be filled from a checkpoint.
    explicit Encoder(EncoderConfig config);

    const EncoderConfig& config() const noexcept { return config_; }

    /// Final-layer hidden states, shape [len x d]. Dropout runs only when training
    /// (rng is required then). Masked positions get zero attention weight from every query.
    Var encode(Tape& tape, const TokenInput& input, bool training, Rng* rng);
    Var encode(Tape& tape, const TokenInput& input) const;

    /// Parameters in a fixed order with stable names ("layer0.query_weight", ...).
    void for_each_parameter(const std::function<void(const std::string&, Tensor&)>& fn);
    void for_each_parameter(const std::function<void(const std::string&, const Tensor&)>& fn) const;

private:
    template <typename Self>
    static Var forward(Self& self, Tape& tape, const TokenInput& input, bool training, Rng* rng);

    EncoderConfig config_;
    Tensor token_embedding_;
    Tensor position_embedding_;
    Tensor segment_embedding_;
    Tensor embedding_norm_gamma_, embedding_norm_beta_;
    std::vector<EncoderLayer> layers_;
};

/// MEAN: masked average; MAX: masked coordinate-wise max; CLS: row 0. Result shape {d}.
Var pool(Var hidden, std::span<const std::uint8_t> mask, Pooling strategy);

/// Checks lengths and id ranges against the config; throws DataError.
void validate_input(const EncoderConfig& config, const TokenInput& input);

}  // namespace dvsm
