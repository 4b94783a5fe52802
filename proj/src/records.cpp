#include "optspa/records.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "optspa/errors.hpp"

namespace optspa {

using ojson = nlohmann::ordered_json;

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string sparsity_profile_to_json(const SparsityProfile& p) {
    ojson j;
    j["overall"] = p.overall;
    j["layers"] = ojson::array();
    for (const auto& l : p.layers) {
        ojson e;
        e["index"] = l.index;
        if (l.per_matrix) {
            ojson mods = ojson::object();
            for (auto k : kMatrixKinds) mods[std::string(matrix_kind_name(k))] = l.ratio(k);
            e["modules"] = mods;
        } else {
            e["ratio"] = l.ratios[0];
        }
        j["layers"].push_back(e);
    }
    return j.dump(2) + "\n";
}

SparsityProfile sparsity_profile_from_json(const std::string& text) {
    try {
        const auto j = ojson::parse(text);
        SparsityProfile p;
        p.overall = j.at("overall").get<double>();
        for (const auto& e : j.at("layers")) {
            LayerSparsity ls;
            ls.index = e.at("index").get<std::size_t>();
            if (e.contains("modules")) {
                ls.per_matrix = true;
                const auto& mods = e.at("modules");
                for (auto k : kMatrixKinds) {
                    ls.ratios[static_cast<std::size_t>(k)] = mods.at(std::string(matrix_kind_name(k))).get<double>();
                }
                for (const auto& [name, _] : mods.items()) parse_matrix_kind(name);
            } else {
                ls.ratios.fill(e.at("ratio").get<double>());
            }
            p.layers.push_back(ls);
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw invalid_input_error(std::string("malformed sparsity profile: ") + e.what());
    }
}

std::string bandwidth_profile_to_json(const BandwidthProfile& p) {
    ojson j;
    j["bits"] = p.bits;
    return j.dump() + "\n";
}

BandwidthProfile bandwidth_profile_from_json(const std::string& text) {
    try {
        const auto j = ojson::parse(text);
        return BandwidthProfile{j.at("bits").get<std::vector<int>>()};
    } catch (const nlohmann::json::exception& e) {
        throw invalid_input_error(std::string("malformed bandwidth profile: ") + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::string ledger_line(const SearchSpace& space, const TrialRecord& record) {
    const auto values = assignment_values(space, record.assignment);
    ojson j;
    j["trial"] = record.trial;
    ojson a = ojson::object();
    for (std::size_t d = 0; d < values.size(); ++d) {
        if (space.kind == SpaceKind::bandwidth) a[space.dims[d].name] = static_cast<int>(values[d]);
        else a[space.dims[d].name] = values[d];
    }
    j["assignment"] = a;
    j["feasible"] = record.feasible;
    j["ppl"] = record.objective ? ojson(*record.objective) : ojson(nullptr);
    j["seconds"] = record.seconds;
    return j.dump();
}

std::string ledger_text(const SearchSpace& space, const std::vector<TrialRecord>& records) {
    std::string out;
    for (const auto& r : records) out += ledger_line(space, r) + "\n";
    return out;
}

std::vector<LedgerEntry> parse_ledger(const std::string& text) {
    std::vector<LedgerEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            const auto j = ojson::parse(line);
            LedgerEntry e;
            if (!j.at("trial").is_number_unsigned()) throw invalid_input_error("trial is not a non-negative integer");
            e.trial = j.at("trial").get<std::size_t>();
            for (const auto& [k, v] : j.at("assignment").items()) e.assignment.emplace_back(k, v.get<double>());
            e.feasible = j.at("feasible").get<bool>();
            if (!j.at("ppl").is_null()) e.ppl = j.at("ppl").get<double>();
            e.seconds = j.at("seconds").get<double>();
            if (e.ppl && !e.feasible) throw invalid_input_error("infeasible trial carries a ppl");
            out.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw invalid_input_error("ledger line " + std::to_string(line_no) + " is malformed: " + ex.what());
        }
    }
    return out;
}

namespace {

// "L3" and "L3.Wq" both belong to layer 3.
std::size_t layer_of(const std::string& dim) {
    std::size_t layer = 0;
    if (dim.size() < 2 || dim[0] != 'L') throw invalid_input_error("assignment key '" + dim + "' is not a layer");
    const auto* first = dim.data() + 1;
    const auto* last = dim.data() + dim.size();
    const auto [ptr, ec] = std::from_chars(first, last, layer);
    if (ec != std::errc() || (ptr != last && *ptr != '.')) {
        throw invalid_input_error("assignment key '" + dim + "' is not a layer");
    }
    return layer;
}

std::map<std::size_t, double> per_layer_means(const LedgerEntry& e) {
    std::map<std::size_t, std::pair<double, double>> acc;
    for (const auto& [dim, v] : e.assignment) {
        auto& [sum, n] = acc[layer_of(dim)];
        sum += v;
        n += 1.0;
    }
    std::map<std::size_t, double> out;
    for (const auto& [l, sn] : acc) out[l] = sn.first / sn.second;
    return out;
}

}  // namespace

ReportTables emit_report(const std::vector<LedgerEntry>& ledger) {
    ReportTables out;
    out.trials_csv = "trial,feasible,ppl\n";
    out.layers_csv = "layer,best,top5_mean\n";

    std::vector<std::size_t> evaluated;
    std::vector<double> ppls;
    for (std::size_t i = 0; i < ledger.size(); ++i) {
        const auto& e = ledger[i];
        out.trials_csv += std::to_string(e.trial) + "," + (e.feasible ? "true" : "false") + "," +
                          (e.ppl ? format_number(*e.ppl) : std::string()) + "\n";
        if (e.ppl) {
            evaluated.push_back(i);
            ppls.push_back(*e.ppl);
        }
    }
    if (evaluated.empty()) return out;

    const auto order = stable_argsort(std::span<const double>(ppls), SortOrder::asc);
    const auto best = per_layer_means(ledger[evaluated[order[0]]]);
    const std::size_t top = std::min<std::size_t>(5, order.size());
    std::map<std::size_t, double> top_sum;
    for (std::size_t r = 0; r < top; ++r) {
        for (const auto& [l, v] : per_layer_means(ledger[evaluated[order[r]]])) top_sum[l] += v;
    }
    for (const auto& [l, v] : best) {
        out.layers_csv += std::to_string(l) + "," + format_number(v) + "," +
                          format_number(top_sum[l] / static_cast<double>(top)) + "\n";
    }
    return out;
}

}  // namespace optspa
