#include <atomic>
#include <iostream>

#include "cagp/types.hpp"

namespace cagp {

namespace {
void default_warn(const std::string& msg) { std::cerr << "[cagp] warning: " << msg << "\n"; }
std::atomic<WarnHandler> g_handler{&default_warn};
}  // namespace

WarnHandler set_warn_handler(WarnHandler h) {
  return g_handler.exchange(h ? h : &default_warn);
}

void warn(const std::string& msg) { g_handler.load()(msg); }

}  // namespace cagp
