#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_search_path0_empty_tree(void)
{
    TEST_ASSERT_NULL(search(NULL, 1));
}
