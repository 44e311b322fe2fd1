// Copyright 2026 The DSMCS Authors
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

#ifndef DSMCS_IO_HPP
#define DSMCS_IO_HPP

#include <string>
#include <string_view>

namespace dsmcs {

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

/// Shortest decimal text that reads back to the same double; "nan", "inf" and "-inf" otherwise.
std::string format_double(double value);

}  // namespace dsmcs

#endif
