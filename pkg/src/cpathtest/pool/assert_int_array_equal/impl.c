#include <stddef.h>

void assert_int_array_equal(const int *expected, const int *actual, size_t n)
{
    for (size_t i = 0; i < n; i++)
        TEST_ASSERT_EQUAL_INT_MESSAGE(expected[i], actual[i], "array element differs");
}
