#include "fedgkd/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "fedgkd/errors.hpp"

namespace fedgkd {

using nlohmann::json;

MlpSpec ExperimentConfig::model_spec(std::size_t input_width) const {
    MlpSpec spec;
    spec.activation = activation;
    if (layer_widths) {
        spec.layer_widths = *layer_widths;
        spec.validate();
        if (spec.input_width() != input_width)
            throw ConfigError("model.layer_widths", "input width " + std::to_string(spec.input_width()) +
                                                        " does not match the data's " + std::to_string(input_width) + " features");
    } else {
        spec.layer_widths.push_back(input_width);
        spec.layer_widths.insert(spec.layer_widths.end(), hidden_widths.begin(), hidden_widths.end());
        spec.layer_widths.push_back(num_classes);
        spec.validate();
    }
    if (spec.output_width() != num_classes)
        throw ConfigError("model.layer_widths", "output width " + std::to_string(spec.output_width()) +
                                                    " must equal num_classes = " + std::to_string(num_classes));
    return spec;
}

std::uint64_t ExperimentConfig::effective_partition_seed() const noexcept {
    return partition_seed ? *partition_seed : fed.seed;
}

void ExperimentConfig::validate() const {
    fed.validate();
    PartitionSpec p = partition;
    p.num_clients = fed.num_clients;
    p.validate();
    diagnostics.probe.validate();
    if (num_classes < 1) throw ConfigError("num_classes", "must be >= 1");
    if (source == DatasetSource::toy) {
        if (num_classes != 4) throw ConfigError("num_classes", "the toy dataset has 4 classes");
        if (toy_train_size < 4) throw ConfigError("toy.train_size", "must be >= 4");
        if (toy_test_size < 4) throw ConfigError("toy.test_size", "must be >= 4");
        if (toy_train_size < fed.num_clients) throw ConfigError("federation.num_clients", "more clients than training examples");
        (void)model_spec(2);
    } else {
        if (train_csv.empty()) throw ConfigError("csv.train", "required when dataset is csv");
        if (test_csv.empty()) throw ConfigError("csv.test", "required when dataset is csv");
        if (layer_widths) {
            MlpSpec spec{*layer_widths, activation};
            spec.validate();
            if (spec.output_width() != num_classes)
                throw ConfigError("model.layer_widths", "output width " + std::to_string(spec.output_width()) +
                                                            " must equal num_classes = " + std::to_string(num_classes));
        }
    }
    if (fed.strategy == Strategy::fedgkd_vote && !(partition.val_fraction > 0.0))
        throw ConfigError("partition.val_fraction", "fedgkd_vote needs a client validation split (> 0)");
}

namespace {

// Walks a JSON object, handing out typed values and rejecting anything left unread.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!node_.contains(key)) return;
        seen_.insert(key);
        try {
            out = node_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(field(key), "wrong type: " + node_.at(key).dump());
        }
    }

    template <typename T>
    void read(const std::string& key, std::optional<T>& out) {
        if (!node_.contains(key)) return;
        T value{};
        read(key, value);
        out = value;
    }

    void read_count(const std::string& key, std::size_t& out) {
        if (!node_.contains(key)) return;
        const json& v = node_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(field(key), "expected a non-negative integer");
        seen_.insert(key);
        out = v.get<std::size_t>();
    }

    const json* child(const std::string& key) {
        if (!node_.contains(key)) return nullptr;
        seen_.insert(key);
        return &node_.at(key);
    }

    void finish() const {
        for (const auto& [key, _] : node_.items())
            if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<std::size_t> read_widths(const json& v, const std::string& field) {
    if (!v.is_array()) throw ConfigError(field, "expected an array of widths");
    std::vector<std::size_t> out;
    for (const auto& w : v) {
        if (!w.is_number_integer() || w.get<long long>() < 1) throw ConfigError(field, "widths must be positive integers");
        out.push_back(w.get<std::size_t>());
    }
    return out;
}

}  // namespace

ExperimentConfig config_from_json(const json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    Section root(doc, "");

    std::string strategy = "fedavg";
    root.read("strategy", strategy);
    cfg.fed.strategy = strategy_from_string(strategy);

    root.read("seed", cfg.fed.seed);

    std::string dataset = "toy";
    root.read("dataset", dataset);
    if (dataset == "toy") cfg.source = DatasetSource::toy;
    else if (dataset == "csv") cfg.source = DatasetSource::csv;
    else throw ConfigError("dataset", "expected 'toy' or 'csv', got '" + dataset + "'");

    root.read_count("num_classes", cfg.num_classes);

    if (const json* node = root.child("toy")) {
        Section s(*node, "toy");
        s.read_count("train_size", cfg.toy_train_size);
        s.read_count("test_size", cfg.toy_test_size);
        s.finish();
    }
    if (const json* node = root.child("csv")) {
        Section s(*node, "csv");
        std::string train, test;
        s.read("train", train);
        s.read("test", test);
        s.finish();
        auto resolve = [&](const std::string& p) -> std::filesystem::path {
            if (p.empty()) return {};
            std::filesystem::path path(p);
            return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
        };
        cfg.train_csv = resolve(train);
        cfg.test_csv = resolve(test);
    }

    if (const json* node = root.child("model")) {
        Section s(*node, "model");
        if (const json* h = s.child("hidden")) cfg.hidden_widths = read_widths(*h, "model.hidden");
        if (const json* w = s.child("layer_widths")) cfg.layer_widths = read_widths(*w, "model.layer_widths");
        std::string act = "relu";
        s.read("activation", act);
        cfg.activation = activation_from_string(act);
        s.finish();
    }

    if (const json* node = root.child("federation")) {
        Section s(*node, "federation");
        s.read_count("num_clients", cfg.fed.num_clients);
        s.read("participation", cfg.fed.participation);
        s.read_count("rounds", cfg.fed.rounds);
        s.read_count("local_epochs", cfg.fed.local_epochs);
        s.read_count("batch_size", cfg.fed.batch_size);
        s.read_count("buffer_size", cfg.fed.buffer_size);
        s.read("vote_lambda", cfg.fed.vote_lambda);
        s.read("vote_beta", cfg.fed.vote_beta);
        s.read_count("workers", cfg.fed.workers);
        s.finish();
    }
    if (const json* node = root.child("distill")) {
        Section s(*node, "distill");
        s.read("gamma", cfg.fed.distill.gamma);
        s.read("temperature", cfg.fed.distill.temperature);
        std::string kind = "kl";
        s.read("kind", kind);
        cfg.fed.distill.kind = regularizer_from_string(kind);
        s.finish();
    }
    if (const json* node = root.child("prox")) {
        Section s(*node, "prox");
        s.read("mu", cfg.fed.prox.mu);
        s.finish();
    }
    if (const json* node = root.child("sgd")) {
        Section s(*node, "sgd");
        s.read("learning_rate", cfg.fed.sgd.learning_rate);
        s.read("momentum", cfg.fed.sgd.momentum);
        s.read("weight_decay", cfg.fed.sgd.weight_decay);
        s.finish();
    }

    std::optional<double> val_fraction;
    if (const json* node = root.child("partition")) {
        Section s(*node, "partition");
        s.read("alpha", cfg.partition.alpha);
        s.read("val_fraction", val_fraction);
        s.read("seed", cfg.partition_seed);
        s.finish();
    }
    // Validation data is only consumed by fedgkd_vote's teacher scoring.
    cfg.partition.val_fraction = val_fraction ? *val_fraction
                                              : (cfg.fed.strategy == Strategy::fedgkd_vote ? 0.1 : 0.0);

    std::string out_dir;
    root.read("output_dir", out_dir);
    if (!out_dir.empty()) cfg.output_dir = out_dir;

    if (const json* node = root.child("diagnostics")) {
        Section s(*node, "diagnostics");
        s.read("enabled", cfg.diagnostics.enabled);
        s.read("inexactness_c", cfg.diagnostics.probe.coefficient);
        s.finish();
    }
    root.finish();

    cfg.partition.num_clients = cfg.fed.num_clients;
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc, path.parent_path());
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["strategy"] = to_string(cfg.fed.strategy);
    j["seed"] = cfg.fed.seed;
    j["dataset"] = cfg.source == DatasetSource::toy ? "toy" : "csv";
    j["num_classes"] = cfg.num_classes;
    if (cfg.source == DatasetSource::toy) {
        j["toy"] = {{"train_size", cfg.toy_train_size}, {"test_size", cfg.toy_test_size}};
    } else {
        j["csv"] = {{"train", cfg.train_csv.string()}, {"test", cfg.test_csv.string()}};
    }
    nlohmann::ordered_json model;
    if (cfg.layer_widths) model["layer_widths"] = *cfg.layer_widths;
    else model["hidden"] = cfg.hidden_widths;
    model["activation"] = to_string(cfg.activation);
    j["model"] = model;

    const FedConfig& f = cfg.fed;
    j["federation"] = {{"num_clients", f.num_clients}, {"participation", f.participation},
                       {"rounds", f.rounds},           {"local_epochs", f.local_epochs},
                       {"batch_size", f.batch_size},   {"buffer_size", f.buffer_size},
                       {"vote_lambda", f.vote_lambda}, {"vote_beta", f.beta()},
                       {"workers", f.workers}};
    j["distill"] = {{"gamma", f.distill.gamma}, {"temperature", f.distill.temperature}, {"kind", to_string(f.distill.kind)}};
    j["prox"] = {{"mu", f.prox.mu}};
    j["sgd"] = {{"learning_rate", f.sgd.learning_rate}, {"momentum", f.sgd.momentum}, {"weight_decay", f.sgd.weight_decay}};
    j["partition"] = {{"alpha", cfg.partition.alpha}, {"val_fraction", cfg.partition.val_fraction},
                      {"seed", cfg.effective_partition_seed()}};
    j["output_dir"] = cfg.output_dir.string();
    j["diagnostics"] = {{"enabled", cfg.diagnostics.enabled}, {"inexactness_c", cfg.diagnostics.probe.coefficient}};
    return j;
}

}  // namespace fedgkd
