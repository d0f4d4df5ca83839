#include "epistwin/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

#include "json.hpp"

namespace epistwin {

using nlohmann::json;

namespace {

std::string require_string(const json& doc, const char* key, const std::string& where) {
    if (!doc.contains(key) || !doc[key].is_string())
        raise(ErrorKind::MalformedRecord, where + ": missing string field '" + key + "'");
    return doc[key].get<std::string>();
}

std::string format_fixed(double value, int places) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(places) << value;
    return out.str();
}

std::string pad_left(const std::string& text, std::size_t width) {
    if (text.size() >= width) return text;
    return std::string(width - text.size(), ' ') + text;
}

std::string pad_right(const std::string& text, std::size_t width) {
    if (text.size() >= width) return text;
    return text + std::string(width - text.size(), ' ');
}

}  // namespace

const char* dimension_name(QueryDimension dimension) {
    switch (dimension) {
        case QueryDimension::Temporal: return "temporal";
        case QueryDimension::CrossSource: return "cross_source";
        case QueryDimension::FactRetrieval: return "fact_retrieval";
    }
    return "?";
}

QueryDimension parse_dimension(const std::string& name) {
    if (name == "temporal") return QueryDimension::Temporal;
    if (name == "cross_source") return QueryDimension::CrossSource;
    if (name == "fact_retrieval") return QueryDimension::FactRetrieval;
    raise(ErrorKind::SchemaViolation, "unknown query dimension '" + name + "'");
}

std::vector<BenchmarkItem> load_benchmark_items(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open benchmark file '" + path + "'");

    std::vector<BenchmarkItem> items;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::string where = path + ":" + std::to_string(lineno);
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            raise(ErrorKind::MalformedRecord, where + ": " + e.what());
        }
        BenchmarkItem item;
        item.id = require_string(doc, "id", where);
        item.query = require_string(doc, "query", where);
        item.target_answer = require_string(doc, "answer", where);
        item.dimension = parse_dimension(require_string(doc, "dimension", where));
        if (!doc.contains("app_span") || !doc["app_span"].is_number_unsigned())
            raise(ErrorKind::MalformedRecord,
                  where + ": missing numeric field 'app_span'");
        item.app_span = doc["app_span"].get<std::size_t>();
        if (item.app_span < 1)
            raise(ErrorKind::SchemaViolation, where + ": app_span must be at least 1");
        if (!ids.insert(item.id).second)
            raise(ErrorKind::DuplicateId, where + ": duplicate item id '" + item.id + "'");
        items.push_back(std::move(item));
    }
    return items;
}

namespace {

json parse_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, std::string("cannot open ") + what + " file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        raise(ErrorKind::MalformedRecord, path + ": " + e.what());
    }
}

ItemScript parse_item_script(const json& entry, const std::string& where) {
    ItemScript script;
    if (entry.contains("steps")) {
        for (const json& raw : entry["steps"]) {
            ScriptedPolicy::Step step;
            if (raw.contains("thought")) step.thought = raw["thought"].get<std::string>();
            step.action.kind = parse_action_kind(require_string(raw, "action", where));
            if (raw.contains("args"))
                for (const auto& [key, value] : raw["args"].items())
                    step.action.args[key] = value.get<std::string>();
            script.steps.push_back(std::move(step));
        }
    }
    if (entry.contains("verdicts"))
        for (const json& v : entry["verdicts"]) script.verdicts.push_back(v.get<bool>());
    return script;
}

}  // namespace

ItemScript ItemScript::from_file(const std::string& path) {
    json doc = parse_json_file(path, "script");
    if (!doc.is_object())
        raise(ErrorKind::MalformedRecord, path + ": expected a script object");
    return parse_item_script(doc, path);
}

ScriptBook ScriptBook::from_file(const std::string& path) {
    json doc = parse_json_file(path, "script");
    if (!doc.is_object())
        raise(ErrorKind::MalformedRecord, path + ": expected an object of item scripts");

    ScriptBook book;
    for (const auto& [id, entry] : doc.items())
        book.by_item[id] = parse_item_script(entry, path + " item " + id);
    return book;
}

std::vector<BenchmarkOutcome> run_benchmark(const std::vector<BenchmarkItem>& items,
                                            const Pkg& graph,
                                            const PersonalKnowledge& knowledge,
                                            const ScriptBook* scripts,
                                            const AgentConfig& config,
                                            ModelGateway* gateway,
                                            const PromptSet* prompts) {
    std::vector<BenchmarkOutcome> outcomes;
    outcomes.reserve(items.size());
    for (const BenchmarkItem& item : items) {
        BenchmarkOutcome outcome;
        outcome.item = item;
        outcome.trajectory.query = item.query;

        const ItemScript* script = nullptr;
        if (scripts != nullptr) {
            auto hit = scripts->by_item.find(item.id);
            if (hit != scripts->by_item.end()) script = &hit->second;
        }

        AgentConfig item_config = config;
        const std::vector<bool>* verdicts = nullptr;
        if (script != nullptr && !script->verdicts.empty()) {
            item_config.verifier = VerifierBackend::Scripted;
            verdicts = &script->verdicts;
        }

        try {
            Agent agent(graph, knowledge, item_config, gateway, prompts);
            AgentResult result;
            if (script != nullptr) {
                ScriptedPolicy policy(script->steps);
                result = agent.run(item.query, policy, verdicts);
            } else {
                HeuristicPolicy policy;
                result = agent.run(item.query, policy, verdicts);
            }
            outcome.item.system_answer = result.answer;
            outcome.trajectory = std::move(result.trajectory);
        } catch (const EtError& e) {
            outcome.error = e.what();
        }
        outcomes.push_back(std::move(outcome));
    }
    return outcomes;
}

RatingTable score_with_panel(const std::vector<BenchmarkOutcome>& outcomes,
                             const std::vector<std::string>& judges,
                             ModelGateway& gateway, const PromptSet& prompts) {
    if (judges.empty()) raise(ErrorKind::EmptyInput, "the judge panel is empty");
    if (outcomes.empty()) raise(ErrorKind::EmptyInput, "there are no outcomes to score");

    RatingTable table;
    table.judges = judges;
    for (const BenchmarkOutcome& outcome : outcomes) {
        std::vector<int> row;
        row.reserve(judges.size());
        for (const std::string& judge : judges) {
            GatewayParams params;
            params.model = judge;
            JudgeResult verdict =
                judge_answer(gateway, prompts, outcome.item.query,
                             outcome.item.target_answer, outcome.item.system_answer,
                             params);
            if (verdict.score < 1 || verdict.score > 5)
                raise(ErrorKind::ScoreOutOfRange,
                      "judge '" + judge + "' scored " + std::to_string(verdict.score) +
                          " on item '" + outcome.item.id + "'");
            row.push_back(verdict.score);
        }
        table.scores.push_back(std::move(row));
    }
    validate_rating_table(table);
    return table;
}

EvalReport build_report(const RatingTable& table, MetricLevel agreement_level) {
    validate_rating_table(table);

    EvalReport report;
    report.agreement_level = agreement_level;
    const double n = static_cast<double>(table.items());

    std::size_t category_counts[3] = {0, 0, 0};
    for (std::size_t j = 0; j < table.judges.size(); ++j) {
        JudgeSummary summary;
        summary.name = table.judges[j];
        std::size_t counts[5] = {0, 0, 0, 0, 0};
        double sum = 0.0;
        for (const std::vector<int>& row : table.scores) {
            ++counts[row[j] - 1];
            sum += row[j];
            ++category_counts[static_cast<std::size_t>(normalize_category(row[j]))];
        }
        for (int s = 0; s < 5; ++s)
            summary.pct[s] = 100.0 * static_cast<double>(counts[s]) / n;
        summary.mean = sum / n;
        report.judges.push_back(std::move(summary));
    }
    const double cells = n * static_cast<double>(table.judges.size());
    for (int c = 0; c < 3; ++c)
        report.category_pct[c] = 100.0 * static_cast<double>(category_counts[c]) / cells;

    for (std::size_t a = 0; a < table.judges.size(); ++a) {
        for (std::size_t b = a + 1; b < table.judges.size(); ++b) {
            PairwiseRow row;
            row.a = table.judges[a];
            row.b = table.judges[b];
            std::vector<int> va = table.column(a);
            std::vector<int> vb = table.column(b);
            row.ac1 = gwet_ac1(va, vb, agreement_level);
            row.agreement = percentage_agreement(va, vb, agreement_level);
            try {
                row.kappa = cohen_kappa_qw(va, vb, agreement_level);
            } catch (const EtError& e) {
                if (e.kind() != ErrorKind::DegenerateMarginals) throw;
            }
            try {
                row.rho = spearman_rho(va, vb);
            } catch (const EtError& e) {
                if (e.kind() != ErrorKind::ZeroVariance) throw;
            }
            report.pairs.push_back(std::move(row));
        }
    }

    if (table.judges.size() >= 2 && table.items() >= 2)
        report.alpha = krippendorff_alpha(table);

    // aligned text tables
    std::ostringstream out;
    std::size_t name_width = 6;
    for (const JudgeSummary& judge : report.judges)
        name_width = std::max(name_width, judge.name.size() + 2);

    out << "score distribution by judge\n";
    out << "  " << pad_right("score", 8);
    for (const JudgeSummary& judge : report.judges)
        out << pad_left(judge.name, name_width);
    out << "\n";
    for (int s = 5; s >= 1; --s) {
        out << "  " << pad_right(std::to_string(s) + " (%)", 8);
        for (const JudgeSummary& judge : report.judges)
            out << pad_left(format_fixed(judge.pct[s - 1], 1), name_width);
        out << "\n";
    }
    out << "  " << pad_right("mean", 8);
    for (const JudgeSummary& judge : report.judges)
        out << pad_left(format_fixed(judge.mean, 2), name_width);
    out << "\n\n";

    out << "pooled categories: negative " << format_fixed(report.category_pct[0], 1)
        << "%  neutral " << format_fixed(report.category_pct[1], 1) << "%  positive "
        << format_fixed(report.category_pct[2], 1) << "%\n\n";

    if (!report.pairs.empty()) {
        std::size_t pair_width = 6;
        for (const PairwiseRow& row : report.pairs)
            pair_width = std::max(pair_width, row.a.size() + row.b.size() + 5);
        out << "pairwise reliability (ac1/%agr/kappa at "
            << metric_level_name(agreement_level) << " level, rho on raw scores)\n";
        out << "  " << pad_right("pair", pair_width) << pad_left("ac1", 9)
            << pad_left("%agr", 9) << pad_left("kappa", 9) << pad_left("rho", 9)
            << "\n";
        for (const PairwiseRow& row : report.pairs) {
            out << "  " << pad_right(row.a + " x " + row.b, pair_width)
                << pad_left(format_fixed(row.ac1, 4), 9)
                << pad_left(format_fixed(row.agreement, 4), 9)
                << pad_left(row.kappa ? format_fixed(*row.kappa, 4) : "n/a", 9)
                << pad_left(row.rho ? format_fixed(*row.rho, 4) : "n/a", 9) << "\n";
        }
        out << "\n";
    }

    if (report.alpha) {
        out << "krippendorff alpha (raw, ordinal): "
            << format_fixed(report.alpha->value, 4);
        if (report.alpha->degenerate) out << " (degenerate: one repeated value)";
        out << "\n";
    }
    report.text = out.str();

    // machine-readable twin of the text report
    json doc;
    doc["level"] = metric_level_name(agreement_level);
    doc["judges"] = json::array();
    for (const JudgeSummary& judge : report.judges) {
        json entry;
        entry["name"] = judge.name;
        for (int s = 1; s <= 5; ++s)
            entry["distribution_pct"][std::to_string(s)] = judge.pct[s - 1];
        entry["mean"] = judge.mean;
        doc["judges"].push_back(entry);
    }
    doc["categories_pct"]["negative"] = report.category_pct[0];
    doc["categories_pct"]["neutral"] = report.category_pct[1];
    doc["categories_pct"]["positive"] = report.category_pct[2];
    doc["pairs"] = json::array();
    for (const PairwiseRow& row : report.pairs) {
        json entry;
        entry["a"] = row.a;
        entry["b"] = row.b;
        entry["ac1"] = row.ac1;
        entry["percent_agreement"] = row.agreement;
        entry["kappa_qw"] = row.kappa ? json(*row.kappa) : json(nullptr);
        entry["rho"] = row.rho ? json(*row.rho) : json(nullptr);
        doc["pairs"].push_back(entry);
    }
    if (report.alpha) {
        doc["alpha"]["value"] = report.alpha->value;
        doc["alpha"]["degenerate"] = report.alpha->degenerate;
    } else {
        doc["alpha"] = nullptr;
    }
    report.machine = doc.dump(2) + "\n";
    return report;
}

}  // namespace epistwin
