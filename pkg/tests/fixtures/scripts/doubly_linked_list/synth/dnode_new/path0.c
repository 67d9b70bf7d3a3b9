#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) { malloc_fail_after(-1); }

void test_dnode_new_path0_alloc_fails(void)
{
    malloc_fail_after(0);
    struct dnode *n = dnode_new(3);
    malloc_fail_after(-1);
    TEST_ASSERT_NULL(n);
}
