// Copyright 2026 The cm2sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Deterministic CSV output. All doubles are printed with %.17g so values
// round-trip exactly and files are byte-identical across runs; infinities
// print as "inf"/"-inf".

namespace cm2 {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_int(long long v) { return std::to_string(v); }

/// Accumulates comment lines, a header, and rows; writes in one pass.
class CsvBuilder {
 public:
  void comment(const std::string& text) { body_ += "# " + text + "\n"; }

  void header(const std::vector<std::string>& cols) { body_ += join(cols); }

  void row(const std::vector<std::string>& cells) { body_ += join(cells); }

  const std::string& str() const { return body_; }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << body_;
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  }

  std::string body_;
};

}  // namespace cm2
