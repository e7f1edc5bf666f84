#include "dvsm/checkpoint.hpp"

#include <cstring>

#include "dvsm/error.hpp"

namespace dvsm {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'V', 'S', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, std::span<const double> values) {
    const std::size_t offset = out.size();
    out.resize(offset + values.size() * sizeof(double));
    if (!values.empty()) std::memcpy(out.data() + offset, values.data(), values.size() * sizeof(double));
}

template <typename Model>
std::string serialize(const Model& model, const char* kind, json header, const AdamState* optimizer) {
    header["format"] = "dvsm-checkpoint";
    header["kind"] = kind;
    header["task"] = std::string(to_string(model.task()));
    header["encoder"] = to_json(model.encoder().config());
    header["vocab"] = model.vocab().tokens();
    json params = json::array();
    std::vector<std::span<const double>> payload;
    model.for_each_parameter([&](const std::string& name, const Tensor& t) {
        params.push_back({{"name", name}, {"shape", t.shape()}});
        payload.push_back(t.values());
    });
    header["parameters"] = params;
    if (optimizer) {
        if (optimizer->first_moment.size() != payload.size() || optimizer->second_moment.size() != payload.size()) {
            throw DimensionError("optimizer state does not match model parameters");
        }
        header["optimizer"] = {{"step", optimizer->step},
                               {"beta1", optimizer->beta1},
                               {"beta2", optimizer->beta2},
                               {"eps", optimizer->eps}};
    } else {
        header["optimizer"] = nullptr;
    }
    const std::string text = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out += text;
    for (auto values : payload) put_doubles(out, values);
    if (optimizer) {
        for (std::size_t i = 0; i < payload.size(); ++i) {
            if (optimizer->first_moment[i].size() != payload[i].size()) {
                throw DimensionError("optimizer moment size does not match parameter");
            }
            put_doubles(out, optimizer->first_moment[i]);
        }
        for (std::size_t i = 0; i < payload.size(); ++i) put_doubles(out, optimizer->second_moment[i]);
    }
    return out;
}

class Cursor {
public:
    Cursor(std::string_view data, const std::string& source) : data_(data), source_(source) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void doubles(std::span<double> out) {
        need(out.size() * sizeof(double));
        if (!out.empty()) std::memcpy(out.data(), data_.data() + pos_, out.size() * sizeof(double));
        pos_ += out.size() * sizeof(double);
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DataError(source_ + ": truncated checkpoint");
    }

    std::string_view data_;
    const std::string& source_;
    std::size_t pos_ = 0;
};

template <typename Model>
void read_parameters(Model& model, const json& header, Cursor& cursor, const std::string& source,
                     std::vector<Tensor*>& order) {
    const json& expected = header.at("parameters");
    std::size_t index = 0;
    model.for_each_parameter([&](const std::string& name, Tensor& t) {
        if (index >= expected.size() || expected[index].at("name") != name ||
            expected[index].at("shape").template get<Shape>() != t.shape()) {
            throw DataError(source + ": parameter layout does not match the stored configuration at '" + name + "'");
        }
        order.push_back(&t);
        ++index;
    });
    if (index != expected.size()) throw DataError(source + ": unexpected extra parameters");
    for (Tensor* t : order) cursor.doubles(t->values());
}

}  // namespace

json to_json(const EncoderConfig& c) {
    return {{"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
            {"hidden_dim", c.hidden_dim},   {"num_layers", c.num_layers},
            {"num_heads", c.num_heads},     {"ffn_dim", c.ffn_dim},
            {"num_segments", c.num_segments}, {"dropout_rate", c.dropout_rate},
            {"layer_norm_eps", c.layer_norm_eps}, {"init_std", c.init_std}};
}

EncoderConfig encoder_config_from_json(const json& j, EncoderConfig c) {
    if (!j.is_object()) throw UsageError("encoder config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
            else if (key == "max_seq_len") c.max_seq_len = value.get<std::size_t>();
            else if (key == "hidden_dim") c.hidden_dim = value.get<std::size_t>();
            else if (key == "num_layers") c.num_layers = value.get<std::size_t>();
            else if (key == "num_heads") c.num_heads = value.get<std::size_t>();
            else if (key == "ffn_dim") c.ffn_dim = value.get<std::size_t>();
            else if (key == "num_segments") c.num_segments = value.get<std::size_t>();
            else if (key == "dropout_rate") c.dropout_rate = value.get<double>();
            else if (key == "layer_norm_eps") c.layer_norm_eps = value.get<double>();
            else if (key == "init_std") c.init_std = value.get<double>();
            else throw UsageError("unknown encoder config key '" + key + "'");
        } catch (const json::exception& e) {
            throw UsageError("encoder config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

std::string serialize_checkpoint(const SiameseModel& model, const AdamState* optimizer) {
    json header;
    header["pooling"] = std::string(to_string(model.pooling()));
    header["num_outputs"] = model.num_classes();
    return serialize(model, "siamese", std::move(header), optimizer);
}

std::string serialize_checkpoint(const CrossModel& model, const AdamState* optimizer) {
    json header;
    header["num_outputs"] = model.num_outputs();
    return serialize(model, "cross", std::move(header), optimizer);
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source) {
    Cursor cursor(bytes, source);
    if (cursor.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
        throw DataError(source + ": not a checkpoint file");
    }
    if (const auto version = cursor.get<std::uint32_t>(); version != kVersion) {
        throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = cursor.get<std::uint64_t>();
    json header;
    try {
        header = json::parse(cursor.bytes(header_len));
        const std::string kind = header.at("kind");
        const TaskKind task = parse_task_kind(header.at("task").get<std::string>());
        const EncoderConfig config = encoder_config_from_json(header.at("encoder"));
        const std::size_t outputs = header.at("num_outputs");
        auto tokens = header.at("vocab").get<std::vector<std::string>>();
        if (tokens.size() < 4) throw DataError(source + ": vocabulary lacks reserved tokens");
        Vocab vocab = Vocab::from_tokens(std::vector<std::string>(tokens.begin() + 4, tokens.end()));
        if (vocab.tokens() != tokens) throw DataError(source + ": vocabulary reserved tokens corrupted");

        std::vector<Tensor*> order;
        auto finish = [&](auto model) -> Checkpoint {
            read_parameters(model, header, cursor, source, order);
            std::optional<AdamState> opt;
            if (!header.at("optimizer").is_null()) {
                const json& o = header.at("optimizer");
                AdamState s = make_adam_state(order, o.at("beta1"), o.at("beta2"), o.at("eps"));
                s.step = o.at("step");
                for (auto& m : s.first_moment) cursor.doubles(m);
                for (auto& v : s.second_moment) cursor.doubles(v);
                opt = std::move(s);
            }
            if (!cursor.done()) throw DataError(source + ": trailing bytes after checkpoint payload");
            return Checkpoint{std::move(model), std::move(opt)};
        };
        if (kind == "siamese") {
            const Pooling pooling = parse_pooling(header.at("pooling").get<std::string>());
            return finish(SiameseModel(std::move(vocab), config, pooling, task, outputs));
        }
        if (kind == "cross") return finish(CrossModel(std::move(vocab), config, task, outputs));
        throw DataError(source + ": unknown model kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw DataError(source + ": malformed checkpoint header: " + e.what());
    } catch (const UsageError& e) {
        throw DataError(source + ": " + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const SiameseModel& model, const AdamState* optimizer) {
    write_file(path, serialize_checkpoint(model, optimizer));
}

void save_checkpoint(const std::filesystem::path& path, const CrossModel& model, const AdamState* optimizer) {
    write_file(path, serialize_checkpoint(model, optimizer));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file(path), path.string());
}

}  // namespace dvsm
