#include "seqfusion/core.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace seqfusion {

MultivariateSeries::MultivariateSeries(Matrix v, std::vector<std::string> names)
    : values(std::move(v)), channel_names(std::move(names)) {
    if (values.rows() < 1 || values.cols() < 1) throw Error("series must have T >= 1 and C >= 1");
    if (!channel_names.empty() && static_cast<Eigen::Index>(channel_names.size()) != values.cols()) {
        throw Error("channel name count does not match channel count");
    }
}

TimeSeries trim_to_last(const TimeSeries& x, Eigen::Index n) {
    if (n < 0 || x.size() < n) throw Error("insufficient history");
    return x.tail(n);
}

TimeSeries trim_to_first(const TimeSeries& x, Eigen::Index n) {
    if (n < 0 || x.size() < n) throw Error("insufficient history");
    return x.head(n);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& name, bool has_header) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    int row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (row_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (cells.size() < 2) {
            throw Error("csv row " + std::to_string(row_no) + ": need at least 2 columns (index + value)");
        }
        if (width == 0) {
            width = cells.size();
        } else if (cells.size() != width) {
            throw Error("csv row " + std::to_string(row_no) + ": expected " + std::to_string(width) +
                        " columns, found " + std::to_string(cells.size()));
        }
        if (has_header && header.empty()) {
            header.assign(cells.begin() + 1, cells.end());
            continue;
        }
        std::vector<double> vals(cells.size() - 1);
        for (std::size_t j = 1; j < cells.size(); ++j) {
            double v = 0.0;
            if (!parse_number(cells[j], v) || !std::isfinite(v)) {
                throw Error("csv row " + std::to_string(row_no) + ", column " + std::to_string(j + 1) +
                            ": non-numeric or non-finite value '" + cells[j] + "'");
            }
            vals[j - 1] = v;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw Error("csv '" + name + "': no data rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    Dataset ds;
    ds.series = MultivariateSeries(std::move(m), std::move(header));
    ds.name = name;
    return ds;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, bool has_header) {
    return parse_csv(read_text(path), dataset_name_from_path(path), has_header);
}

bool csv_has_header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        for (const auto& cell : split_row(line)) {
            double v = 0.0;
            if (!parse_number(cell, v)) return true;
        }
        return false;
    }
    return false;
}

Dataset load_csv(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    return parse_csv(text, dataset_name_from_path(path), csv_has_header(text));
}

std::string dataset_name_from_path(const std::filesystem::path& path) {
    return path.stem().string();
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("cannot format double");
    return std::string(buf, ptr);
}

void write_csv(const std::filesystem::path& path, const MultivariateSeries& series) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << "t";
    for (Eigen::Index c = 0; c < series.channels(); ++c) {
        f << ',';
        if (static_cast<Eigen::Index>(series.channel_names.size()) == series.channels()) {
            f << series.channel_names[static_cast<std::size_t>(c)];
        } else {
            f << "c" << c;
        }
    }
    f << '\n';
    for (Eigen::Index t = 0; t < series.length(); ++t) {
        f << t;
        for (Eigen::Index c = 0; c < series.channels(); ++c) f << ',' << format_double(series.values(t, c));
        f << '\n';
    }
}

}  // namespace seqfusion
