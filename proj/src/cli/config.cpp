#include "klms/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace klms::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
    return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        if (!tok.empty() && tok.back() == ',') tok.pop_back();
        if (!tok.empty()) out.push_back(parse_number<T>(key, tok));
    }
    if (out.empty()) throw ConfigError("'" + key + "' expects a list of numbers");
    return out;
}

class Reader {
public:
    explicit Reader(const IniFile& f) : f_(f) {}

    template <class T>
    void number(const std::string& key, T& target) const {
        if (auto v = f_.get(key)) target = parse_number<T>(key, *v);
    }
    void text(const std::string& key, std::string& target) const {
        if (auto v = f_.get(key)) target = *v;
    }
    template <class T>
    void list(const std::string& key, std::vector<T>& target) const {
        if (auto v = f_.get(key)) target = parse_list<T>(key, *v);
    }

private:
    const IniFile& f_;
};

const char* to_string(DictionarySource s) {
    switch (s) {
        case DictionarySource::grid: return "grid";
        case DictionarySource::coherence: return "coherence";
        case DictionarySource::file: return "file";
    }
    return "?";
}

void apply_preset(RunConfig& c, const std::string& preset) {
    if (preset == "experiment1") {
        c.system = SystemKind::wiener_poly;
        c.input = {0.5, 0.5};
        c.sigma = 0.25;
        c.dictionary = DictionarySpec{};
    } else if (preset == "experiment2") {
        c.system = SystemKind::fluid_flow;
        c.input = {0.5, 0.25};
        c.sigma = 0.15;
        c.dictionary = DictionarySpec{};
        c.dictionary.source = DictionarySource::coherence;
        c.dictionary.target_size = 37;
    } else if (preset != "custom") {
        throw ConfigError("unknown preset '" + preset + "' (expected experiment1, experiment2 or custom)");
    }
    c.preset = preset;
}

template <class T>
void join(std::ostream& os, const std::vector<T>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
}

void validate(const RunConfig& c) {
    if (c.system == SystemKind::kernel_expansion)
        throw ConfigError("system.kind must be wiener_poly or fluid_flow");
    if (!(c.eta > 0.0) || !std::isfinite(c.eta)) throw ConfigError("filter.eta must be > 0");
    if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) throw ConfigError("kernel.sigma must be > 0");
    if (c.runs < 1) throw ConfigError("simulation.runs must be >= 1");
    if (c.horizon < 1) throw ConfigError("simulation.horizon must be >= 1");
    if (!(std::abs(c.input.rho) < 1.0)) throw ConfigError("input.rho must lie in (-1, 1)");
    if (!(c.input.sigma_x > 0.0)) throw ConfigError("input.sigma_x must be > 0");
    if (!(c.noise_std >= 0.0)) throw ConfigError("system.noise_std must be >= 0");
    if (c.theory_samples < 2) throw ConfigError("theory.samples must be >= 2");
    const auto& d = c.dictionary;
    if (d.source == DictionarySource::file) {
        if (d.path.empty()) throw ConfigError("dictionary.path is required for source = file");
        if (!std::ifstream(d.path)) throw ConfigError("dictionary file '" + d.path + "' does not exist");
    }
    if (d.source == DictionarySource::coherence) {
        if (d.mu0 && !(*d.mu0 >= 0.0 && *d.mu0 < 1.0)) throw ConfigError("dictionary.mu0 must lie in [0, 1)");
        if (d.target_size < 1) throw ConfigError("dictionary.target_size must be >= 1");
        if (d.stream_length < 1) throw ConfigError("dictionary.stream_length must be >= 1");
    }
    for (const auto* p : {&c.empirical_csv, &c.theory_csv, &c.theory_report})
        if (!p->empty() && !std::ifstream(*p)) throw ConfigError("input file '" + *p + "' does not exist");
    if (c.empirical_csv.empty() != c.theory_csv.empty())
        throw ConfigError("compare.empirical and compare.theory must be given together");
}

}  // namespace

IniFile IniFile::parse(std::istream& is, const std::string& origin) {
    IniFile f;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        f.values_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return f;
}

IniFile IniFile::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    return parse(is, path);
}

std::optional<std::string> IniFile::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

RunConfig resolve(const IniFile& file_in, const Overrides& overrides) {
    IniFile file = file_in;
    for (const auto& a : overrides.assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + a + "'");
        file.set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
    }

    static const std::vector<std::string> known{
        "experiment.preset", "system.kind", "system.noise_std", "input.rho", "input.sigma_x", "kernel.sigma",
        "filter.eta", "dictionary.source", "dictionary.lower", "dictionary.upper", "dictionary.points",
        "dictionary.mu0", "dictionary.target_size", "dictionary.stream_length", "dictionary.path",
        "simulation.runs", "simulation.horizon", "simulation.seed", "theory.samples",
        "compare.steady_state_tolerance", "compare.transient_tolerance", "compare.window", "compare.checkpoints",
        "compare.empirical", "compare.theory", "compare.theory_report", "output.dir"};
    for (const auto& [key, value] : file.values())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key '" + key + "'");

    RunConfig c;
    const Reader r(file);
    std::string preset = "custom";
    r.text("experiment.preset", preset);
    apply_preset(c, preset);

    if (auto kind = file.get("system.kind")) {
        try {
            c.system = system_kind_from_string(*kind);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }
    r.number("system.noise_std", c.noise_std);
    r.number("input.rho", c.input.rho);
    r.number("input.sigma_x", c.input.sigma_x);
    r.number("kernel.sigma", c.sigma);
    r.number("filter.eta", c.eta);

    auto& d = c.dictionary;
    if (auto src = file.get("dictionary.source")) {
        if (*src == "grid") d.source = DictionarySource::grid;
        else if (*src == "coherence") d.source = DictionarySource::coherence;
        else if (*src == "file") d.source = DictionarySource::file;
        else throw ConfigError("dictionary.source must be grid, coherence or file");
    }
    r.list("dictionary.lower", d.lower);
    r.list("dictionary.upper", d.upper);
    r.list("dictionary.points", d.points);
    if (auto mu = file.get("dictionary.mu0")) d.mu0 = parse_number<double>("dictionary.mu0", *mu);
    r.number("dictionary.target_size", d.target_size);
    r.number("dictionary.stream_length", d.stream_length);
    r.text("dictionary.path", d.path);

    r.number("simulation.runs", c.runs);
    r.number("simulation.horizon", c.horizon);
    r.number("simulation.seed", c.seed);
    r.number("theory.samples", c.theory_samples);
    r.number("compare.steady_state_tolerance", c.tolerances.steady_state_tolerance);
    r.number("compare.transient_tolerance", c.tolerances.transient_tolerance);
    r.number("compare.window", c.tolerances.window);
    r.list("compare.checkpoints", c.tolerances.checkpoints);
    r.text("compare.empirical", c.empirical_csv);
    r.text("compare.theory", c.theory_csv);
    r.text("compare.theory_report", c.theory_report);
    r.text("output.dir", c.out_dir);

    if (overrides.seed) c.seed = *overrides.seed;
    if (overrides.runs) c.runs = *overrides.runs;
    if (overrides.horizon) c.horizon = *overrides.horizon;
    if (overrides.eta) c.eta = *overrides.eta;
    if (overrides.sigma) c.sigma = *overrides.sigma;
    if (overrides.out_dir) c.out_dir = *overrides.out_dir;

    validate(c);
    return c;
}

void write_resolved(std::ostream& os, const RunConfig& c) {
    os << std::setprecision(17);
    os << "[experiment]\npreset = " << c.preset << "\n\n";
    os << "[system]\nkind = " << klms::to_string(c.system) << "\nnoise_std = " << c.noise_std << "\n\n";
    os << "[input]\nrho = " << c.input.rho << "\nsigma_x = " << c.input.sigma_x << "\n\n";
    os << "[kernel]\nsigma = " << c.sigma << "\n\n";
    os << "[filter]\neta = " << c.eta << "\n\n";
    const auto& d = c.dictionary;
    os << "[dictionary]\nsource = " << to_string(d.source) << '\n';
    switch (d.source) {
        case DictionarySource::grid:
            os << "lower = ";
            join(os, d.lower);
            os << "\nupper = ";
            join(os, d.upper);
            os << "\npoints = ";
            join(os, d.points);
            os << '\n';
            break;
        case DictionarySource::coherence:
            if (d.mu0) os << "mu0 = " << *d.mu0 << '\n';
            else os << "target_size = " << d.target_size << '\n';
            os << "stream_length = " << d.stream_length << '\n';
            break;
        case DictionarySource::file: os << "path = " << d.path << '\n'; break;
    }
    os << "\n[simulation]\nruns = " << c.runs << "\nhorizon = " << c.horizon << "\nseed = " << c.seed << "\n\n";
    os << "[theory]\nsamples = " << c.theory_samples << "\n\n";
    os << "[compare]\nsteady_state_tolerance = " << c.tolerances.steady_state_tolerance
       << "\ntransient_tolerance = " << c.tolerances.transient_tolerance << "\nwindow = " << c.tolerances.window
       << "\ncheckpoints = ";
    join(os, c.tolerances.checkpoints);
    os << '\n';
    if (!c.empirical_csv.empty()) os << "empirical = " << c.empirical_csv << "\ntheory = " << c.theory_csv << '\n';
    if (!c.theory_report.empty()) os << "theory_report = " << c.theory_report << '\n';
    os << "\n[output]\ndir = " << c.out_dir << '\n';
}

Dictionary build_dictionary(const RunConfig& c, std::optional<CoherenceSweep>* sweep) {
    const auto& d = c.dictionary;
    const GaussianKernel kernel(c.sigma);
    switch (d.source) {
        case DictionarySource::grid:
            return from_grid(d.lower, d.upper, d.points);
        case DictionarySource::file:
            return read_dictionary(d.path);
        case DictionarySource::coherence: {
            const auto stream = input_stream(c.input, derive_seed(c.seed, streams::dictionary), d.stream_length);
            double mu0 = 0.0;
            if (d.mu0) {
                mu0 = *d.mu0;
            } else {
                const auto s = coherence_threshold_for_size(stream, kernel, d.target_size);
                if (sweep) *sweep = s;
                mu0 = s.mu0;
            }
            return from_coherence(stream, kernel, mu0);
        }
    }
    throw ConfigError("unreachable dictionary source");
}

ExperimentConfig experiment_config(const RunConfig& c, Dictionary dict) {
    auto system = c.system == SystemKind::fluid_flow ? BenchmarkSystem::fluid_flow(c.noise_std)
                                                     : BenchmarkSystem::wiener_poly(c.noise_std);
    return ExperimentConfig{c.input, std::move(system), std::move(dict), GaussianKernel(c.sigma), c.eta,
                            c.horizon, c.seed, std::nullopt};
}

}  // namespace klms::cli
