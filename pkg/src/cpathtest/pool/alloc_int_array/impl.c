#include <stddef.h>
#include <stdlib.h>

int *alloc_int_array(size_t n, int first, int step)
{
    int *arr = malloc((n ? n : 1) * sizeof *arr);
    TEST_ASSERT_NOT_NULL(arr);
    for (size_t i = 0; i < n; i++)
        arr[i] = first + (int)i * step;
    return arr;
}
