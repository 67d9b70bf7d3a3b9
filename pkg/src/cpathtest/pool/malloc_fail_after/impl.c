#include <stddef.h>
#include <stdlib.h>

/* Allocation fault injection. Linking with -Wl,--wrap=malloc (and calloc,
 * realloc) routes every allocation through the wrappers below. */
void *__real_malloc(size_t size);
void *__real_calloc(size_t n, size_t size);
void *__real_realloc(void *ptr, size_t size);

static int malloc_budget = -1;

void malloc_fail_after(int n)
{
    malloc_budget = n;
}

static int malloc_should_fail(void)
{
    if (malloc_budget < 0)
        return 0;
    if (malloc_budget == 0)
        return 1;
    malloc_budget--;
    return 0;
}

void *__wrap_malloc(size_t size)
{
    return malloc_should_fail() ? NULL : __real_malloc(size);
}

void *__wrap_calloc(size_t n, size_t size)
{
    return malloc_should_fail() ? NULL : __real_calloc(n, size);
}

void *__wrap_realloc(void *ptr, size_t size)
{
    return malloc_should_fail() ? NULL : __real_realloc(ptr, size);
}
