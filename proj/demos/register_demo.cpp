#include <cstdio>

int main() {
  std::printf("registration demo placeholder\n");
  return 0;
}
