#include <cstdio>
int main() {
  std::fprintf(stderr, "lamecgo: command-line interface not wired yet\n");
  return 2;
}
