#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "seqxfer/tensor.hpp"
#include "seqxfer/vocab.hpp"

namespace seqxfer {

/// The unit of persistence and transfer: architecture descriptor,
/// provenance log, per-epoch metrics, vocabularies and named tensors.
///
/// On disk the manifest is line-oriented text terminated by a "[payload]"
/// line, followed by every tensor (in manifest order) as little-endian
/// IEEE-754 doubles. Doubles inside the manifest are written with 17
/// significant digits, so save -> load -> save is byte-identical.
struct Checkpoint {
  std::map<std::string, std::string> architecture;
  std::vector<std::string> provenance;
  std::vector<std::string> metrics;
  Vocabulary words{Vocabulary::Kind::kWord, {}};
  Vocabulary chars{Vocabulary::Kind::kChar, {}};
  ParamStore params;

  const std::string& arch(const std::string& key) const;
  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::string& path);

/// Shortest text that parses back to the identical double.
std::string format_double(double value);
double parse_double(const std::string& text);
std::string join(const std::vector<std::size_t>& values, char sep = ',');
std::vector<std::size_t> parse_sizes(const std::string& text, char sep = ',');

}  // namespace seqxfer
