#include <cstdio>

int main() {
  std::puts("sweepds: cli not wired up yet");
  return 1;
}
