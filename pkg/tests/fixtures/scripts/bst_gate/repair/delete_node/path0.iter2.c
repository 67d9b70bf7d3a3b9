#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_delete_node_path0_empty_tree(void)
{
    TEST_ASSERT_NULL(delete_node(NULL, 4));
}
