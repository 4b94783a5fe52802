#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "optspa/prune.hpp"
#include "optspa/quant.hpp"
#include "optspa/search.hpp"

namespace optspa {

// {"overall": r, "layers": [{"index": i, "ratio": r} | {"index": i, "modules": {"Wq": r, ...}}]}
std::string sparsity_profile_to_json(const SparsityProfile& p);
SparsityProfile sparsity_profile_from_json(const std::string& text);

// {"bits": [b_0, ..., b_{L-1}]}
std::string bandwidth_profile_to_json(const BandwidthProfile& p);
BandwidthProfile bandwidth_profile_from_json(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// One ledger line as read back from disk. Assignment keeps file order.
struct LedgerEntry {
    std::size_t trial = 0;
    std::vector<std::pair<std::string, double>> assignment;
    bool feasible = false;
    std::optional<double> ppl;
    double seconds = 0.0;
};

// {"trial": t, "assignment": {...}, "feasible": bool, "ppl": number|null, "seconds": number}
std::string ledger_line(const SearchSpace& space, const TrialRecord& record);
std::string ledger_text(const SearchSpace& space, const std::vector<TrialRecord>& records);

// Throws invalid_input_error naming the 1-based line number of a malformed record.
std::vector<LedgerEntry> parse_ledger(const std::string& text);

struct ReportTables {
    std::string trials_csv;  // trial,feasible,ppl
    std::string layers_csv;  // layer,best,top5_mean
};

// Per-trial table plus a per-layer summary of the best trial and the mean of
// the five best evaluated trials. Per-matrix dims are averaged into their layer.
ReportTables emit_report(const std::vector<LedgerEntry>& ledger);

// Shortest round-trip decimal for a double.
std::string format_number(double v);

}  // namespace optspa
