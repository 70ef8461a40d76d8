#include "ligdiff/xyz_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ligdiff/errors.hpp"

namespace ligdiff {

std::string XyzFrame::meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
        if (k == key) return v;
    return "";
}

std::string write_xyz(const XyzFrame& frame) {
    std::string out;
    out += std::to_string(frame.n_atoms());
    out += '\n';
    bool first = true;
    for (const auto& [k, v] : frame.metadata) {
        if (!first) out += ' ';
        out += k;
        out += '=';
        out += v;
        first = false;
    }
    out += '\n';
    char row[128];
    for (int i = 0; i < frame.n_atoms(); ++i) {
        std::snprintf(row, sizeof(row), "%s %.6f %.6f %.6f\n", frame.elements[i].c_str(),
                      frame.coords[3 * static_cast<std::size_t>(i)],
                      frame.coords[3 * static_cast<std::size_t>(i) + 1],
                      frame.coords[3 * static_cast<std::size_t>(i) + 2]);
        out += row;
    }
    return out;
}

XyzFrame parse_xyz(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("xyz: missing atom count line");
    int n = 0;
    try {
        n = std::stoi(line);
    } catch (const std::exception&) {
        throw IoError("xyz: bad atom count line: " + line);
    }
    if (n < 0) throw IoError("xyz: negative atom count");

    XyzFrame frame;
    if (!std::getline(in, line)) throw IoError("xyz: missing metadata line");
    std::istringstream meta(line);
    std::string token;
    while (meta >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw IoError("xyz: metadata token without '=': " + token);
        frame.metadata.emplace_back(token.substr(0, eq), token.substr(eq + 1));
    }

    for (int i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw IoError("xyz: truncated atom block");
        std::istringstream row(line);
        std::string elem;
        double x, y, z;
        if (!(row >> elem >> x >> y >> z)) throw IoError("xyz: bad atom row: " + line);
        frame.elements.push_back(elem);
        frame.coords.push_back(x);
        frame.coords.push_back(y);
        frame.coords.push_back(z);
    }
    return frame;
}

namespace {

template <typename Cloud>
XyzFrame cloud_to_frame(const Cloud& c, const Vocabulary& vocab,
                        std::vector<std::pair<std::string, std::string>> metadata) {
    XyzFrame f;
    f.metadata = std::move(metadata);
    f.coords = c.x;
    f.elements.reserve(c.n_atoms);
    for (int i = 0; i < c.n_atoms; ++i) f.elements.push_back(vocab.symbol(c.argmax_type(i)));
    return f;
}

}  // namespace

XyzFrame to_frame(const MoleculeCloud& m, const Vocabulary& vocab,
                  std::vector<std::pair<std::string, std::string>> metadata) {
    return cloud_to_frame(m, vocab, std::move(metadata));
}

XyzFrame to_frame(const PocketCloud& p, const Vocabulary& vocab,
                  std::vector<std::pair<std::string, std::string>> metadata) {
    return cloud_to_frame(p, vocab, std::move(metadata));
}

MoleculeCloud frame_to_molecule(const XyzFrame& frame, const Vocabulary& vocab) {
    auto m = MoleculeCloud::zeros(frame.n_atoms(), vocab.size());
    m.x = frame.coords;
    for (int i = 0; i < m.n_atoms; ++i) m.types(i)[vocab.index(frame.elements[i])] = 1.0;
    return m;
}

PocketCloud frame_to_pocket(const XyzFrame& frame, const Vocabulary& vocab) {
    auto p = PocketCloud::zeros(frame.n_atoms(), vocab.size());
    p.x = frame.coords;
    for (int i = 0; i < p.n_atoms; ++i)
        p.v[static_cast<std::size_t>(i) * vocab.size() + vocab.index(frame.elements[i])] = 1.0;
    return p;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace ligdiff
