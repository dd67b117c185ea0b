#include "ndlod/cli_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ndlod {

namespace {

std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace

std::vector<int> parse_int_list(const std::string& text)
{
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw std::invalid_argument("empty entry in integer list");
        size_t pos = 0;
        const int v = std::stoi(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("bad integer '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty integer list");
    return out;
}

double parse_epsilon(const std::string& text)
{
    const std::string s = trim(text);
    if (auto slash = s.find('/'); slash != std::string::npos) {
        const double p = std::stod(s.substr(0, slash));
        const double q = std::stod(s.substr(slash + 1));
        if (q == 0.0) throw std::invalid_argument("epsilon: division by zero");
        return p / q;
    }
    if (s.rfind("2^", 0) == 0) return std::ldexp(1.0, std::stoi(s.substr(2)));
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("epsilon: bad value '" + s + "'");
    return v;
}

StudySpec parse_config_text(const std::string& text)
{
    StudySpec spec;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    bool rhs_set = false, compare_set = false;
    while (std::getline(ss, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (val.empty()) throw ConfigError("empty value for '" + key + "'", line_no);
        try {
            if (key == "field") {
                spec.field = val;
            } else if (key == "rhs") {
                spec.rhs = val;
                rhs_set = true;
            } else if (key == "coarse_n") {
                spec.coarse_n = parse_int_list(val);
            } else if (key == "fine_n") {
                spec.fine_n = std::stoi(val);
            } else if (key == "ell") {
                if (val == "auto")
                    spec.ell.clear();
                else
                    spec.ell = parse_int_list(val);
            } else if (key == "epsilon") {
                spec.epsilon = parse_epsilon(val);
            } else if (key == "compare") {
                if (val == "exact")
                    spec.compare = CompareMode::Exact;
                else if (val == "fine-reference")
                    spec.compare = CompareMode::FineReference;
                else
                    throw std::invalid_argument("compare must be 'exact' or 'fine-reference'");
                compare_set = true;
            } else if (key == "out") {
                spec.out = val;
            } else {
                throw std::invalid_argument("unknown key '" + key + "'");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(e.what(), line_no);
        }
    }
    // multiscale fields default to the multiscale rhs and a fine reference
    if (spec.field != "monoscale") {
        if (!rhs_set) spec.rhs = "multiscale";
        if (!compare_set) spec.compare = CompareMode::FineReference;
    }
    validate_spec(spec);
    return spec;
}

StudySpec parse_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("parse_config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const StudySpec& spec)
{
    std::ostringstream os;
    os << "field = " << spec.field << "\n";
    os << "rhs = " << spec.rhs << "\n";
    os << "coarse_n = ";
    for (size_t k = 0; k < spec.coarse_n.size(); ++k)
        os << (k ? "," : "") << spec.coarse_n[k];
    os << "\n";
    os << "fine_n = " << spec.fine_n << "\n";
    if (spec.ell.empty()) {
        os << "ell = auto\n";
    } else {
        os << "ell = ";
        for (size_t k = 0; k < spec.ell.size(); ++k) os << (k ? "," : "") << spec.ell[k];
        os << "\n";
    }
    if (spec.epsilon > 0.0) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", spec.epsilon);
        os << "epsilon = " << buf << "\n";
    }
    os << "compare = " << (spec.compare == CompareMode::Exact ? "exact" : "fine-reference") << "\n";
    if (!spec.out.empty()) os << "out = " << spec.out << "\n";
    return os.str();
}

} // namespace ndlod
