#pragma once

#include <string>
#include <string_view>

#include "irec/error.hpp"

namespace irec::detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline SplitUrl split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::InvalidConfig, "endpoint must be an absolute URL: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

}  // namespace irec::detail
