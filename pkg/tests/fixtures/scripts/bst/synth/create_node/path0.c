#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) { malloc_fail_after(-1); }

void test_create_node_path0_alloc_failure(void)
{
    malloc_fail_after(0);
    struct node *n = create_node(7);
    malloc_fail_after(-1);
    TEST_ASSERT_NULL(n);
}
