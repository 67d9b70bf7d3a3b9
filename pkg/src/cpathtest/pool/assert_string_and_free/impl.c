#include <stdlib.h>

void assert_string_and_free(const char *expected, char *actual)
{
    TEST_ASSERT_NOT_NULL(actual);
    TEST_ASSERT_EQUAL_STRING(expected, actual);
    free(actual);
}
