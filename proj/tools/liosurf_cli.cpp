#include <liosurf/geometry.hpp>

#include <cstdio>

int main() {
  std::puts("liosurf cli placeholder");
  return 0;
}
