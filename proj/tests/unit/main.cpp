#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "qmtot/session.hpp"

int main(int argc, char** argv) {
  // Many cases exercise warning paths on purpose; keep the output readable.
  qmtot::set_log_sink({});
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
