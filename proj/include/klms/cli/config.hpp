#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "klms/errors.hpp"
#include "klms/experiments.hpp"

namespace klms::cli {

/// Bad or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Sectioned "key = value" text. Keys are stored as "section.key"; '#' and
/// ';' start comments.
class IniFile {
public:
    static IniFile parse(std::istream& is, const std::string& origin = "<config>");
    static IniFile load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

enum class DictionarySource { grid, coherence, file };

struct DictionarySpec {
    DictionarySource source = DictionarySource::grid;
    std::vector<double> lower{-1.0, -1.0};
    std::vector<double> upper{1.0, 1.0};
    std::vector<int> points{5, 5};
    std::optional<double> mu0;         ///< coherence: fixed threshold
    std::size_t target_size = 37;      ///< coherence: sweep target when mu0 is unset
    std::size_t stream_length = coherence_stream_length;
    std::string path;                  ///< file source
};

/// Fully resolved settings of one CLI invocation.
struct RunConfig {
    std::string preset = "custom";
    SystemKind system = SystemKind::wiener_poly;
    double noise_std = 0.05;
    Ar1Params input{0.5, 0.5};
    double sigma = 0.25;
    double eta = 0.05;
    DictionarySpec dictionary;
    std::size_t runs = 100;
    std::size_t horizon = 5000;
    std::uint64_t seed = 1;
    std::size_t theory_samples = 1'000'000;
    CompareOptions tolerances;
    std::string empirical_csv;  ///< compare: precomputed empirical curve
    std::string theory_csv;     ///< compare: precomputed predicted curve
    std::string theory_report;  ///< compare: report carrying steady_state_mse
    std::string out_dir = ".";
};

/// Command-line values that take precedence over the file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> horizon;
    std::optional<double> eta;
    std::optional<double> sigma;
    std::optional<std::string> out_dir;
    std::vector<std::string> assignments;  ///< "section.key=value"
};

/// Presets "experiment1" and "experiment2" fill in the published setups;
/// explicit keys then override them.
RunConfig resolve(const IniFile& file, const Overrides& overrides);

/// Echo of every resolved setting, parseable by IniFile.
void write_resolved(std::ostream& os, const RunConfig& config);

/// Builds (or loads) the dictionary. Sets `sweep` when a coherence sweep ran.
Dictionary build_dictionary(const RunConfig& config, std::optional<CoherenceSweep>* sweep = nullptr);

ExperimentConfig experiment_config(const RunConfig& config, Dictionary dict);

}  // namespace klms::cli
