#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_find_min_path0_empty_tree(void)
{
    TEST_ASSERT_NULL(find_min(NULL));
}
