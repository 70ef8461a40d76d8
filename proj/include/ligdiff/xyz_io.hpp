#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ligdiff/molsys.hpp"

namespace ligdiff {

// Extended-XYZ text format: atom count, one key=value metadata line, then
// "element x y z" rows at fixed 6-decimal precision. Writing is byte
// deterministic for a given cloud and metadata.
struct XyzFrame {
    std::vector<std::string> elements;
    std::vector<double> coords;  // N x 3
    std::vector<std::pair<std::string, std::string>> metadata;

    int n_atoms() const { return static_cast<int>(elements.size()); }
    std::string meta(const std::string& key) const;  // "" when absent
};

std::string write_xyz(const XyzFrame& frame);
XyzFrame parse_xyz(const std::string& text);  // throws IoError on malformed input

XyzFrame to_frame(const MoleculeCloud& m, const Vocabulary& vocab,
                  std::vector<std::pair<std::string, std::string>> metadata = {});
XyzFrame to_frame(const PocketCloud& p, const Vocabulary& vocab,
                  std::vector<std::pair<std::string, std::string>> metadata = {});
MoleculeCloud frame_to_molecule(const XyzFrame& frame, const Vocabulary& vocab);
PocketCloud frame_to_pocket(const XyzFrame& frame, const Vocabulary& vocab);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace ligdiff
