#include <stddef.h>
#include <stdlib.h>

void *checked_malloc(size_t size)
{
    void *p = malloc(size);
    TEST_ASSERT_NOT_NULL_MESSAGE(p, "checked_malloc: allocation failed");
    return p;
}
