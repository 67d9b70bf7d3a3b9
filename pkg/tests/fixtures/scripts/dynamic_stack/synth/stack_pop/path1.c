#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_stack_pop_path1_returns_top(void)
{
    int values[] = {1, 2, 3};
    struct stack *s = stack_from_values(values, 3);
    int v = 0;
    TEST_ASSERT_EQUAL_INT(0, stack_pop(s, &v));
    TEST_ASSERT_EQUAL_INT(1, v);
    TEST_ASSERT_EQUAL_size_t(2, s->size);
    stack_destroy(s);
}
