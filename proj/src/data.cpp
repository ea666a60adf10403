#include "harmony/data.hpp"

#include "harmony/csv.hpp"
#include "harmony/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace harmony {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::string where(const std::filesystem::path& file, std::size_t line, std::string_view column) {
    return file.filename().string() + ":" + std::to_string(line) + " column '" +
           std::string(column) + "'";
}

double parse_real(std::string_view cell, const std::string& context) {
    cell = trim(cell);
    if (cell.empty()) throw Error(ErrorCode::MalformedRow, "empty cell at " + context);
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        throw Error(ErrorCode::MalformedRow,
                    "unparseable value '" + std::string(cell) + "' at " + context);
    }
    return value;
}

int parse_indicator(std::string_view cell, const std::string& context) {
    const double v = parse_real(cell, context);
    if (v != 0.0 && v != 1.0) {
        throw Error(ErrorCode::MalformedRow, "expected 0 or 1 at " + context);
    }
    return static_cast<int>(v);
}

struct RawRow {
    double outcome;
    int treatment;
    std::string label;
    Eigen::VectorXd covariates;
    double weight;
};

std::vector<RawRow> read_rows(const std::filesystem::path& path, const CsvSchema& schema,
                              bool is_ec) {
    const csv::Table table = csv::read(path);

    auto require = [&](const std::string& name) {
        const long idx = table.column(name);
        if (idx < 0) {
            throw Error(ErrorCode::MalformedRow,
                        path.filename().string() + ": missing column '" + name + "'");
        }
        return static_cast<std::size_t>(idx);
    };

    const std::size_t y_col = require(schema.outcome);
    const std::size_t w_col = require(schema.subgroup);
    long t_col = table.column(schema.treatment);
    if (t_col < 0 && (!is_ec || schema.ec_requires_treatment)) t_col = static_cast<long>(require(schema.treatment));
    std::vector<std::size_t> x_cols;
    for (const auto& name : schema.covariates) x_cols.push_back(require(name));
    long wt_col = -1;
    if (schema.weight) wt_col = static_cast<long>(require(*schema.weight));

    std::vector<RawRow> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        const std::size_t line = table.line_numbers[r];
        if (cells.size() != table.header.size()) {
            throw Error(ErrorCode::DimensionMismatch,
                        path.filename().string() + ":" + std::to_string(line) + " has " +
                            std::to_string(cells.size()) + " fields, header has " +
                            std::to_string(table.header.size()));
        }
        RawRow row;
        row.outcome = parse_real(cells[y_col], where(path, line, schema.outcome));
        if (schema.family == OutcomeFamily::Binary && row.outcome != 0.0 && row.outcome != 1.0) {
            throw Error(ErrorCode::MalformedRow,
                        "binary outcome must be 0 or 1 at " + where(path, line, schema.outcome));
        }
        row.treatment = t_col >= 0
                            ? parse_indicator(cells[static_cast<std::size_t>(t_col)],
                                              where(path, line, schema.treatment))
                            : 0;
        if (is_ec && row.treatment == 1) {
            throw Error(ErrorCode::EcTreatedPatient,
                        "external-control row with treatment=1 at " + path.filename().string() +
                            ":" + std::to_string(line));
        }
        row.label = std::string(trim(cells[w_col]));
        if (row.label.empty()) {
            throw Error(ErrorCode::MalformedRow,
                        "empty subgroup label at " + where(path, line, schema.subgroup));
        }
        row.covariates.resize(static_cast<Eigen::Index>(x_cols.size()));
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            row.covariates(static_cast<Eigen::Index>(j)) =
                parse_real(cells[x_cols[j]], where(path, line, schema.covariates[j]));
        }
        row.weight = wt_col >= 0 ? parse_real(cells[static_cast<std::size_t>(wt_col)],
                                              where(path, line, *schema.weight))
                                 : 1.0;
        if (row.weight < 0.0) {
            throw Error(ErrorCode::MalformedRow,
                        "negative weight at " + where(path, line, *schema.weight));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void CombinedDataset::validate() const {
    if (subgroup_labels.size() != K) {
        throw Error(ErrorCode::DimensionMismatch, "subgroup label count differs from K");
    }
    auto check = [&](const SubjectRecord& rec, Study expected) {
        if (rec.study != expected) {
            throw Error(ErrorCode::MalformedRow, "record filed under the wrong study");
        }
        if (rec.subgroup >= K) {
            throw Error(ErrorCode::UnknownSubgroup,
                        "subgroup index " + std::to_string(rec.subgroup + 1) + " outside 1.." +
                            std::to_string(K));
        }
        if (static_cast<std::size_t>(rec.covariates.size()) != d) {
            throw Error(ErrorCode::DimensionMismatch, "covariate vector length differs from d");
        }
        if (rec.treatment != 0 && rec.treatment != 1) {
            throw Error(ErrorCode::MalformedRow, "treatment must be 0 or 1");
        }
        if (!(rec.weight >= 0.0)) throw Error(ErrorCode::MalformedRow, "negative weight");
        if (family == OutcomeFamily::Binary && rec.outcome != 0.0 && rec.outcome != 1.0) {
            throw Error(ErrorCode::MalformedRow, "binary outcome must be 0 or 1");
        }
    };
    for (const auto& rec : rct) check(rec, Study::Rct);
    for (const auto& rec : ec) {
        check(rec, Study::Ec);
        if (rec.treatment == 1) {
            throw Error(ErrorCode::EcTreatedPatient, "external-control record with treatment=1");
        }
    }
}

CombinedDataset CombinedDataset::rct_only() const {
    CombinedDataset out;
    out.rct = rct;
    out.K = K;
    out.d = d;
    out.family = family;
    out.subgroup_labels = subgroup_labels;
    return out;
}

CombinedDataset load_dataset(const std::filesystem::path& rct_csv,
                             const std::filesystem::path& ec_csv, const CsvSchema& schema) {
    const auto rct_rows = read_rows(rct_csv, schema, false);
    const auto ec_rows = read_rows(ec_csv, schema, true);

    std::vector<std::string> labels;
    if (schema.subgroup_labels) {
        labels = *schema.subgroup_labels;
        std::set<std::string> unique(labels.begin(), labels.end());
        if (unique.size() != labels.size() || labels.empty()) {
            throw Error(ErrorCode::ConfigError, "subgroup label list must be non-empty and unique");
        }
    } else {
        std::set<std::string> unique;
        for (const auto& r : rct_rows) unique.insert(r.label);
        for (const auto& r : ec_rows) unique.insert(r.label);
        labels.assign(unique.begin(), unique.end());
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < labels.size(); ++k) index[labels[k]] = k;

    CombinedDataset ds;
    ds.K = labels.size();
    ds.d = schema.covariates.size();
    ds.family = schema.family;
    ds.subgroup_labels = labels;

    auto convert = [&](const std::vector<RawRow>& rows, Study study,
                       std::vector<SubjectRecord>& out, const std::filesystem::path& file) {
        out.reserve(rows.size());
        for (const auto& r : rows) {
            auto it = index.find(r.label);
            if (it == index.end()) {
                throw Error(ErrorCode::UnknownSubgroup,
                            "label '" + r.label + "' in " + file.filename().string() +
                                " is not among the " + std::to_string(labels.size()) +
                                " declared subgroups");
            }
            out.push_back(SubjectRecord{r.outcome, r.treatment, it->second, r.covariates, study,
                                        r.weight});
        }
    };
    convert(rct_rows, Study::Rct, ds.rct, rct_csv);
    convert(ec_rows, Study::Ec, ds.ec, ec_csv);
    ds.validate();
    return ds;
}

void write_dataset(const CombinedDataset& ds, const std::filesystem::path& rct_csv,
                   const std::filesystem::path& ec_csv, const CsvSchema& schema) {
    if (schema.covariates.size() != ds.d) {
        throw Error(ErrorCode::DimensionMismatch, "schema covariate count differs from d");
    }
    auto write = [&](const std::filesystem::path& path, const std::vector<SubjectRecord>& rows) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
        std::vector<std::string> header{schema.outcome, schema.treatment, schema.subgroup};
        header.insert(header.end(), schema.covariates.begin(), schema.covariates.end());
        if (schema.weight) header.push_back(*schema.weight);
        csv::write_row(out, header);
        for (const auto& r : rows) {
            std::vector<std::string> fields{csv::format_double(r.outcome),
                                            std::to_string(r.treatment),
                                            ds.subgroup_labels[r.subgroup]};
            for (Eigen::Index j = 0; j < r.covariates.size(); ++j) {
                fields.push_back(csv::format_double(r.covariates(j)));
            }
            if (schema.weight) fields.push_back(csv::format_double(r.weight));
            csv::write_row(out, fields);
        }
    };
    write(rct_csv, ds.rct);
    write(ec_csv, ds.ec);
}

Eigen::VectorXd empirical_prevalence(const CombinedDataset& ds) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ds.K));
    for (const auto& r : ds.rct) counts(static_cast<Eigen::Index>(r.subgroup)) += 1.0;
    if (ds.rct.empty()) throw Error(ErrorCode::EmptyArm, "no RCT records");
    return counts / counts.sum();
}

DesignCounts compute_design_counts(const CombinedDataset& ds,
                                   const std::optional<Eigen::VectorXd>& user_pi) {
    const auto K = static_cast<Eigen::Index>(ds.K);
    DesignCounts dc;
    dc.n_rct = Eigen::MatrixXd::Zero(K, 2);
    dc.n_ec = Eigen::VectorXd::Zero(K);
    for (const auto& r : ds.rct) dc.n_rct(static_cast<Eigen::Index>(r.subgroup), r.treatment) += 1.0;
    for (const auto& r : ds.ec) dc.n_ec(static_cast<Eigen::Index>(r.subgroup)) += 1.0;

    if (user_pi) {
        const Eigen::VectorXd& pi = *user_pi;
        if (pi.size() != K) {
            throw Error(ErrorCode::InconsistentDimensions, "prevalence vector length differs from K");
        }
        if ((pi.array() <= 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-12) {
            throw Error(ErrorCode::InvalidDesign,
                        "user prevalences must be strictly positive and sum to one");
        }
        dc.pi = pi;
        dc.source = PrevalenceSource::UserSupplied;
    } else {
        const Eigen::VectorXd per_k = dc.n_rct.rowwise().sum();
        if ((per_k.array() <= 0.0).any()) {
            throw Error(ErrorCode::EmptySubgroup, "a subgroup has no RCT patients; prevalence is zero");
        }
        dc.pi = per_k / per_k.sum();
        dc.source = PrevalenceSource::RctEmpirical;
    }

    dc.Q.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double pooled_controls = dc.n_rct(k, 0) + dc.n_ec(k);
        if (pooled_controls <= 0.0) {
            throw Error(ErrorCode::EmptySubgroup,
                        "subgroup " + std::to_string(k + 1) + " has no control patients");
        }
        dc.Q(k) = dc.n_ec(k) / pooled_controls;
    }
    dc.q_bar = dc.pi.dot(dc.Q);
    const double controls = dc.n_rct.col(0).sum() + dc.n_ec.sum();
    dc.q = dc.n_ec.sum() / controls;
    return dc;
}

}  // namespace harmony
