#include "divsynth/config.hpp"
#include "divsynth/netpbm.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace divsynth {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v)
{
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
    }
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v)
{
    return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    for (const auto& s : split_list(v, ',')) out.push_back(to_double(key, s));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v)
{
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v, ',')) out.push_back(to_size(key, s));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

// shortest text that reads back to the same value
template <typename F>
std::string fmt(F v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f, const char* sep = ",")
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + f(v[i]);
    return out;
}

std::string fmt_doubles(const std::vector<double>& v)
{
    return join(v, [](double x) { return fmt(x); });
}

std::string fmt_sizes(const std::vector<std::size_t>& v)
{
    return join(v, [](std::size_t x) { return std::to_string(x); });
}

} // namespace

struct RunConfig::Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define DS_SIZE(KEY, MEMBER)                                                                                          \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); },                              \
          [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define DS_DOUBLE(KEY, MEMBER)                                                                                        \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },                            \
          [](const RunConfig& c) { return fmt<double>(c.MEMBER); }}

const std::vector<RunConfig::Field>& RunConfig::fields()
{
    static const std::vector<Field> table = {
        Field{"seed", [](RunConfig& c, const std::string& v) { c.seed_ = to_u64("seed", v); },
              [](const RunConfig& c) { return std::to_string(c.seed_); }},
        Field{"base", [](RunConfig& c, const std::string& v) { c.base_ = parse_base_kind(v); },
              [](const RunConfig& c) { return std::string(base_kind_name(c.base_)); }},
        Field{"epochs", [](RunConfig& c, const std::string& v) { c.epochs_ = to_size("epochs", v); },
              [](const RunConfig& c) { return std::to_string(c.train_config().epochs); }},
        Field{"lr", [](RunConfig& c, const std::string& v) { c.lr_ = to_double("lr", v); },
              [](const RunConfig& c) { return fmt(c.train_config().adam.lr); }},
        DS_DOUBLE("adam_beta1", train_.adam.beta1),
        DS_DOUBLE("adam_beta2", train_.adam.beta2),
        DS_DOUBLE("adam_eps", train_.adam.eps),
        DS_DOUBLE("alpha", train_.loss.alpha),
        Field{"beta", [](RunConfig& c, const std::string& v) { c.beta_ = to_double("beta", v); },
              [](const RunConfig& c) { return fmt(c.train_config().loss.beta); }},
        Field{"lambda_c", [](RunConfig& c, const std::string& v) { c.train_.loss.lambda_c = to_doubles("lambda_c", v); },
              [](const RunConfig& c) { return fmt_doubles(c.train_.loss.lambda_c); }},
        Field{"lambda_k", [](RunConfig& c, const std::string& v) { c.train_.loss.lambda_k = to_doubles("lambda_k", v); },
              [](const RunConfig& c) { return fmt_doubles(c.train_.loss.lambda_k); }},
        DS_DOUBLE("log_epsilon", train_.loss.log_epsilon),
        Field{"diversity", [](RunConfig& c, const std::string& v) { c.train_.use_diversity = to_bool("diversity", v); },
              [](const RunConfig& c) { return std::string(c.train_.use_diversity ? "true" : "false"); }},
        DS_SIZE("checkpoint_every", train_.checkpoint_every),
        Field{"augment", [](RunConfig& c, const std::string& v) { c.augment_ = to_bool("augment", v); },
              [](const RunConfig& c) { return std::string(c.train_config().augment ? "true" : "false"); }},
        DS_SIZE("augment_jitter", train_.augment_jitter),
        DS_DOUBLE("flip_prob", train_.flip_prob),

        DS_SIZE("width", world_.width),
        DS_SIZE("height", world_.height),
        Field{"class_names",
              [](RunConfig& c, const std::string& v) { c.world_.class_names = split_list(v, ','); },
              [](const RunConfig& c) { return join(c.world_.class_names, [](const std::string& s) { return s; }); }},
        Field{"palette",
              [](RunConfig& c, const std::string& v) {
                  std::vector<Rgb> p;
                  for (const auto& triple : split_list(v, ',')) {
                      const auto parts = split_list(triple, ' ');
                      if (parts.size() != 3) throw ConfigError("palette: each colour needs 3 components, got '" + triple + "'");
                      p.push_back(Rgb{static_cast<float>(to_double("palette", parts[0])),
                                      static_cast<float>(to_double("palette", parts[1])),
                                      static_cast<float>(to_double("palette", parts[2]))});
                  }
                  c.world_.palette = std::move(p);
              },
              [](const RunConfig& c) {
                  return join(c.world_.palette, [](const Rgb& x) {
                      return fmt(x[0]) + " " + fmt(x[1]) + " " + fmt(x[2]);
                  }, ", ");
              }},
        DS_SIZE("roof_min", world_.roof_min),
        DS_SIZE("roof_max", world_.roof_max),
        DS_SIZE("window_rows_min", world_.window_rows_min),
        DS_SIZE("window_rows_max", world_.window_rows_max),
        DS_SIZE("window_cols_min", world_.window_cols_min),
        DS_SIZE("window_cols_max", world_.window_cols_max),
        DS_SIZE("window_size_min", world_.window_size_min),
        DS_SIZE("window_size_max", world_.window_size_max),
        DS_SIZE("door_width_min", world_.door_width_min),
        DS_SIZE("door_width_max", world_.door_width_max),
        DS_SIZE("door_height_min", world_.door_height_min),
        DS_SIZE("door_height_max", world_.door_height_max),
        DS_DOUBLE("illumination_lo", world_.illumination_lo),
        DS_DOUBLE("illumination_hi", world_.illumination_hi),
        DS_DOUBLE("shading_strength", world_.shading_strength),
        DS_DOUBLE("min_separation_deg", world_.min_separation_deg),
        DS_SIZE("max_retries", world_.max_retries),
        DS_SIZE("train_count", train_count_),
        DS_SIZE("test_count", test_count_),

        DS_SIZE("crn_base_width", spec_.crn.base_width),
        DS_SIZE("crn_base_height", spec_.crn.base_height),
        DS_SIZE("crn_doublings", spec_.crn.doublings),
        DS_SIZE("crn_width", spec_.crn.width),
        DS_SIZE("crn_outputs", spec_.crn.outputs),
        Field{"unet_widths", [](RunConfig& c, const std::string& v) { c.spec_.unet.widths = to_sizes("unet_widths", v); },
              [](const RunConfig& c) { return fmt_sizes(c.spec_.unet.widths); }},
        DS_DOUBLE("unet_dropout", spec_.unet.dropout),
        Field{"disc_widths", [](RunConfig& c, const std::string& v) { c.spec_.disc.widths = to_sizes("disc_widths", v); },
              [](const RunConfig& c) { return fmt_sizes(c.spec_.disc.widths); }},
        Field{"phi_channels",
              [](RunConfig& c, const std::string& v) { c.spec_.phi.channels = to_sizes("phi_channels", v); },
              [](const RunConfig& c) { return fmt_sizes(c.spec_.phi.channels); }},
        Field{"phi_gain", [](RunConfig& c, const std::string& v) { c.spec_.phi.gain = to_double("phi_gain", v); },
              [](const RunConfig& c) { return fmt(c.spec_.phi.gain); }},
        DS_DOUBLE("phi_chroma_weight", spec_.phi.chroma_weight),
        Field{"phi_seed", [](RunConfig& c, const std::string& v) { c.spec_.phi.seed = to_u64("phi_seed", v); },
              [](const RunConfig& c) { return std::to_string(c.spec_.phi.seed); }},

        DS_SIZE("eval_samples", eval_.samples_per_layout),
        DS_SIZE("diversity_samples", eval_.diversity_samples),
        Field{"linkage_steps",
              [](RunConfig& c, const std::string& v) { c.eval_.linkage_steps = to_doubles("linkage_steps", v); },
              [](const RunConfig& c) { return fmt_doubles(c.eval_.linkage_steps); }},
        DS_SIZE("eval_layouts", eval_.max_layouts),
        DS_DOUBLE("threshold_diversity_ratio", thresholds_.diversity_ratio),
        DS_DOUBLE("threshold_linkage", thresholds_.linkage),
        DS_DOUBLE("threshold_accuracy_gap", thresholds_.accuracy_gap),
    };
    return table;
}

#undef DS_SIZE
#undef DS_DOUBLE

RunConfig::RunConfig()
{
    train_ = TrainConfig::defaults_for(BaseKind::crn);
}

bool RunConfig::is_key(const std::string& key) const
{
    const auto& f = fields();
    return std::any_of(f.begin(), f.end(), [&](const Field& x) { return key == x.key; });
}

std::vector<std::string> RunConfig::keys()
{
    std::vector<std::string> out;
    for (const Field& f : fields()) out.emplace_back(f.key);
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    for (const Field& f : fields()) {
        if (key == f.key) {
            try {
                f.set(*this, trim(value));
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError(key + ": " + e.what());
            }
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const
{
    for (const Field& f : fields())
        if (key == f.key) return f.get(*this);
    throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text, const std::string& source)
{
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::apply_file(const std::filesystem::path& path)
{
    apply_text(read_file(path), path.string());
}

void RunConfig::apply_env()
{
    if (const char* s = std::getenv("DIVSYNTH_SEED"); s && *s) {
        try {
            set("seed", s);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("DIVSYNTH_SEED: ") + e.what());
        }
    }
}

std::string RunConfig::resolved_text() const
{
    std::string out;
    for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
    return out;
}

SyntheticWorldConfig RunConfig::world() const
{
    SyntheticWorldConfig w = world_;
    w.seed = seed_;
    return w;
}

ModelSpec RunConfig::model_spec() const
{
    ModelSpec s = spec_;
    s.classes = world_.class_count();
    s.width = world_.width;
    s.height = world_.height;
    s.unet.classes = s.disc.classes = s.crn.classes = s.classes;
    return s;
}

TrainConfig RunConfig::train_config() const
{
    const TrainConfig d = TrainConfig::defaults_for(base_);
    TrainConfig t = train_;
    t.base = base_;
    t.seed = seed_;
    t.epochs = epochs_.value_or(d.epochs);
    t.adam.lr = lr_.value_or(d.adam.lr);
    t.loss.beta = beta_.value_or(d.loss.beta);
    t.augment = augment_.value_or(d.augment);
    return t;
}

EvalOptions RunConfig::eval_options() const
{
    return eval_;
}

void RunConfig::validate() const
{
    try {
        world().validate();
        if (world_.class_names.size() != world_.palette.size()) {
            throw ConfigError("class_names and palette must have the same length");
        }
        model_spec().validate(base_);
        train_config().validate(world_.class_count());
        if (train_count_ == 0) throw ConfigError("train_count must be >= 1");
        if (eval_.diversity_samples < 2) throw ConfigError("diversity_samples must be >= 2");
        if (eval_.linkage_steps.size() < 2) throw ConfigError("linkage_steps needs at least two values");
        if (eval_.samples_per_layout == 0) throw ConfigError("eval_samples must be >= 1");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

RunConfig config_from_text(const std::string& text)
{
    RunConfig c;
    c.apply_text(text, "checkpoint config");
    c.validate();
    return c;
}

} // namespace divsynth
