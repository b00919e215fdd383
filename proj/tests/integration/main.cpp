#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "process.hpp"

int main(int argc, char** argv) {
    harness::become_subreaper();
    doctest::Context ctx(argc, argv);
    const int rc = ctx.run();
    harness::sweep({});
    return rc;
}
